#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace dafr2::imgops {

/// One channel plane, row-major, values unclipped.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

/// Mirror index into [0, n) without repeating the edge sample.
inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto m = static_cast<std::ptrdiff_t>(n);
  const std::ptrdiff_t period = 2 * (m - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < m ? i : period - i);
}

/// Normalized Gaussian taps truncated at 4 sigma.
inline std::vector<double> gaussian_taps(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    taps[static_cast<std::size_t>(k + radius)] = v;
    total += v;
  }
  for (double& t : taps) t /= total;
  return taps;
}

/// Separable Gaussian blur with reflection padding.
inline Plane gaussian_blur(const Plane& in, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
  Plane tmp(in.height, in.width), out(in.height, in.width);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += taps[static_cast<std::size_t>(k + radius)] *
               in.at(y, reflect(static_cast<std::ptrdiff_t>(x) + k, in.width));
      tmp.at(y, x) = acc;
    }
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += taps[static_cast<std::size_t>(k + radius)] *
               tmp.at(reflect(static_cast<std::ptrdiff_t>(y) + k, in.height), x);
      out.at(y, x) = acc;
    }
  return out;
}

/// Dense 2-D convolution with an odd-sized kernel and reflection padding.
inline Plane convolve(const Plane& in, const Plane& kernel) {
  const auto ry = static_cast<std::ptrdiff_t>(kernel.height / 2);
  const auto rx = static_cast<std::ptrdiff_t>(kernel.width / 2);
  Plane out(in.height, in.width);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t dy = -ry; dy <= ry; ++dy)
        for (std::ptrdiff_t dx = -rx; dx <= rx; ++dx)
          acc += kernel.at(static_cast<std::size_t>(dy + ry), static_cast<std::size_t>(dx + rx)) *
                 in.at(reflect(static_cast<std::ptrdiff_t>(y) + dy, in.height),
                       reflect(static_cast<std::ptrdiff_t>(x) + dx, in.width));
      out.at(y, x) = acc;
    }
  return out;
}

/// Bilinear sample; outside the image reads `fill`.
inline double sample(const Plane& in, double y, double x, double fill = 0.0) {
  const double fy = std::floor(y), fx = std::floor(x);
  const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
  const double wy = y - fy, wx = x - fx;
  auto px = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) {
    if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(in.height) || xx >= static_cast<std::ptrdiff_t>(in.width))
      return fill;
    return in.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  return (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) + wy * ((1 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1));
}

/// Inverse-mapped warp about the image centre: output (y,x) reads input at
/// centre + inverse * ((y,x) - centre) + back_shift. Matrix acts on (x, y).
struct Affine2 {
  double a = 1, b = 0, c = 0, d = 1;  // [[a b] [c d]] on column (x, y)
  double shift_x = 0, shift_y = 0;
};

inline Plane warp_inverse(const Plane& in, const Affine2& inverse, double fill = 0.0) {
  Plane out(in.height, in.width);
  const double cy = 0.5 * static_cast<double>(in.height - 1), cx = 0.5 * static_cast<double>(in.width - 1);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) {
      const double ux = static_cast<double>(x) - cx, uy = static_cast<double>(y) - cy;
      const double sx = inverse.a * ux + inverse.b * uy + cx + inverse.shift_x;
      const double sy = inverse.c * ux + inverse.d * uy + cy + inverse.shift_y;
      out.at(y, x) = sample(in, sy, sx, fill);
    }
  return out;
}

/// Integer-or-fractional translation; exact identity at (0,0).
inline Plane translate(const Plane& in, double dx, double dy) {
  if (dx == 0.0 && dy == 0.0) return in;
  return warp_inverse(in, Affine2{1, 0, 0, 1, -dx, -dy});
}

/// Distance from point p to segment ab.
inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

/// Draws an anti-aliased stroke of the given half-width with value `ink`
/// (max-composited).
inline void draw_segment(Plane& img, double ax, double ay, double bx, double by, double half_width, double ink) {
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dist = segment_distance(static_cast<double>(x), static_cast<double>(y), ax, ay, bx, by);
      const double coverage = std::clamp(half_width + 0.5 - dist, 0.0, 1.0);
      if (coverage > 0.0) img.at(y, x) = std::max(img.at(y, x), coverage * ink);
    }
}

inline void draw_disk(Plane& img, double cx, double cy, double radius, double ink, double opacity) {
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dist = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
      const double coverage = std::clamp(radius + 0.5 - dist, 0.0, 1.0) * opacity;
      if (coverage > 0.0) img.at(y, x) = (1.0 - coverage) * img.at(y, x) + coverage * ink;
    }
}

}  // namespace dafr2::imgops
