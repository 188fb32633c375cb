#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "dafr2/corruptions/image_ops.hpp"
#include "dafr2/corruptions/severity_tables.hpp"
#include "dafr2/datasets/dataset.hpp"

namespace dafr2 {

/// The full corruption taxonomy (noise, blur, weather, digital). Kinds whose
/// `kind_implemented()` is false raise NotImplementedError.
enum class CorruptionKind {
  gaussian_noise,
  shot_noise,
  impulse_noise,
  speckle_noise,
  defocus_blur,
  glass_blur,
  gaussian_blur,
  motion_blur,
  zoom_blur,
  snow,
  frost,
  fog,
  brightness,
  contrast,
  elastic,
  jpeg_compression,
  pixelate,
  spatter,
  saturate,
  canny_edges,
  zigzag,
  dotted_line,
  rotate,
  scale,
  shear,
  stripe,
  translate,
};

inline constexpr std::array<std::pair<CorruptionKind, std::string_view>, 27> kCorruptionNames{{
    {CorruptionKind::gaussian_noise, "gaussian_noise"},
    {CorruptionKind::shot_noise, "shot_noise"},
    {CorruptionKind::impulse_noise, "impulse_noise"},
    {CorruptionKind::speckle_noise, "speckle_noise"},
    {CorruptionKind::defocus_blur, "defocus_blur"},
    {CorruptionKind::glass_blur, "glass_blur"},
    {CorruptionKind::gaussian_blur, "gaussian_blur"},
    {CorruptionKind::motion_blur, "motion_blur"},
    {CorruptionKind::zoom_blur, "zoom_blur"},
    {CorruptionKind::snow, "snow"},
    {CorruptionKind::frost, "frost"},
    {CorruptionKind::fog, "fog"},
    {CorruptionKind::brightness, "brightness"},
    {CorruptionKind::contrast, "contrast"},
    {CorruptionKind::elastic, "elastic"},
    {CorruptionKind::jpeg_compression, "jpeg_compression"},
    {CorruptionKind::pixelate, "pixelate"},
    {CorruptionKind::spatter, "spatter"},
    {CorruptionKind::saturate, "saturate"},
    {CorruptionKind::canny_edges, "canny_edges"},
    {CorruptionKind::zigzag, "zigzag"},
    {CorruptionKind::dotted_line, "dotted_line"},
    {CorruptionKind::rotate, "rotate"},
    {CorruptionKind::scale, "scale"},
    {CorruptionKind::shear, "shear"},
    {CorruptionKind::stripe, "stripe"},
    {CorruptionKind::translate, "translate"},
}};

inline std::string_view kind_name(CorruptionKind kind) {
  for (const auto& [k, name] : kCorruptionNames)
    if (k == kind) return name;
  return "unknown";
}

inline CorruptionKind parse_kind(std::string_view name) {
  for (const auto& [k, n] : kCorruptionNames)
    if (n == name) return k;
  throw ParameterError("unknown corruption kind '" + std::string(name) + "'");
}

inline bool kind_implemented(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::snow:
    case CorruptionKind::frost:
    case CorruptionKind::jpeg_compression:
    case CorruptionKind::saturate:
    case CorruptionKind::canny_edges:
      return false;
    default:
      return true;
  }
}

/// Per-severity parameters of a kind.
inline const SeverityTable& severity_table(CorruptionKind kind) {
  using namespace severity;
  switch (kind) {
    case CorruptionKind::gaussian_noise: return severity::gaussian_noise;
    case CorruptionKind::shot_noise: return severity::shot_noise;
    case CorruptionKind::impulse_noise: return severity::impulse_noise;
    case CorruptionKind::speckle_noise: return severity::speckle_noise;
    case CorruptionKind::defocus_blur: return severity::defocus_blur;
    case CorruptionKind::glass_blur: return severity::glass_blur;
    case CorruptionKind::gaussian_blur: return severity::gaussian_blur;
    case CorruptionKind::motion_blur: return severity::motion_blur;
    case CorruptionKind::zoom_blur: return severity::zoom_blur;
    case CorruptionKind::fog: return severity::fog;
    case CorruptionKind::brightness: return severity::brightness;
    case CorruptionKind::contrast: return severity::contrast;
    case CorruptionKind::elastic: return severity::elastic;
    case CorruptionKind::pixelate: return severity::pixelate;
    case CorruptionKind::spatter: return severity::spatter;
    case CorruptionKind::zigzag: return severity::zigzag;
    case CorruptionKind::dotted_line: return severity::dotted_line;
    case CorruptionKind::rotate: return severity::rotate;
    case CorruptionKind::scale: return severity::scale;
    case CorruptionKind::shear: return severity::shear;
    case CorruptionKind::stripe: return severity::stripe;
    case CorruptionKind::translate: return severity::translate;
    default:
      throw NotImplementedError("corruption '" + std::string(kind_name(kind)) + "' is part of the taxonomy but not implemented");
  }
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;
  std::uint64_t seed = 0;
};

using CorruptionParams = std::array<double, 3>;

inline CorruptionParams severity_params(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5) throw ParameterError("severity must be in 1..5, got " + std::to_string(severity));
  return severity_table(kind).levels[static_cast<std::size_t>(severity - 1)];
}

/// Provenance tag stored with corrupted datasets, e.g.
/// "gaussian_noise;severity=3;seed=7;tables=v1".
inline std::string provenance_string(const CorruptionSpec& spec) {
  return std::string(kind_name(spec.kind)) + ";severity=" + std::to_string(spec.severity) +
         ";seed=" + std::to_string(spec.seed) + ";tables=v" + std::to_string(kSeverityTableVersion);
}

inline std::optional<CorruptionSpec> parse_provenance(std::string_view text) {
  const auto semi = text.find(';');
  if (semi == std::string_view::npos) return std::nullopt;
  CorruptionSpec spec;
  try {
    spec.kind = parse_kind(text.substr(0, semi));
    const auto sev = text.find("severity=");
    const auto seed = text.find("seed=");
    if (sev == std::string_view::npos || seed == std::string_view::npos) return std::nullopt;
    spec.severity = std::stoi(std::string(text.substr(sev + 9)));
    spec.seed = std::stoull(std::string(text.substr(seed + 5)));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return spec;
}

namespace detail {

inline double random_sign(Rng& rng) { return rng.bernoulli(0.5) ? 1.0 : -1.0; }

inline imgops::Plane plasma_fractal(std::size_t min_size, double wibble_decay, Rng& rng) {
  std::size_t n = 2;
  while (n < min_size) n *= 2;
  imgops::Plane map(n, n);
  auto at = [&](std::size_t y, std::size_t x) -> double& { return map.at(y % n, x % n); };
  double wibble = 100.0;
  auto wibbled = [&](double sum) { return sum / 4.0 + wibble * rng.uniform(-wibble, wibble); };
  for (std::size_t step = n; step >= 2; step /= 2) {
    const std::size_t half = step / 2;
    for (std::size_t y = 0; y < n; y += step)
      for (std::size_t x = 0; x < n; x += step)
        at(y + half, x + half) = wibbled(at(y, x) + at(y + step, x) + at(y, x + step) + at(y + step, x + step));
    for (std::size_t y = 0; y < n; y += step)
      for (std::size_t x = 0; x < n; x += step) {
        at(y, x + half) = wibbled(at(y, x) + at(y, x + step) + at(y + n - half, x + half) + at(y + half, x + half));
        at(y + half, x) = wibbled(at(y, x) + at(y + step, x) + at(y + half, x + n - half) + at(y + half, x + half));
      }
    wibble /= wibble_decay;
  }
  const auto [lo, hi] = std::minmax_element(map.pixels.begin(), map.pixels.end());
  const double low = *lo, range = *hi - *lo;
  for (double& v : map.pixels) v = range > 0 ? (v - low) / range : 0.0;
  return map;
}

inline imgops::Plane zoom_center(const imgops::Plane& in, double zoom) {
  return imgops::warp_inverse(in, imgops::Affine2{1.0 / zoom, 0, 0, 1.0 / zoom, 0, 0});
}

inline void corrupt_plane(CorruptionKind kind, const CorruptionParams& p, imgops::Plane& img, Rng& rng,
                          double image_max) {
  using namespace imgops;
  const double size = static_cast<double>(std::max(img.height, img.width));
  switch (kind) {
    case CorruptionKind::gaussian_noise:
      for (double& v : img.pixels) v += p[0] * rng.normal();
      return;
    case CorruptionKind::shot_noise:
      for (double& v : img.pixels) v = static_cast<double>(rng.poisson(std::max(v, 0.0) * p[0])) / p[0];
      return;
    case CorruptionKind::impulse_noise:
      for (double& v : img.pixels)
        if (rng.bernoulli(p[0])) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
      return;
    case CorruptionKind::speckle_noise:
      for (double& v : img.pixels) v += v * p[0] * rng.normal();
      return;
    case CorruptionKind::defocus_blur: {
      const double r = p[0];
      const auto k = static_cast<std::size_t>(2 * std::ceil(r) + 1);
      Plane kernel(k, k);
      double total = 0.0;
      const double c = static_cast<double>(k / 2);
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
          const double w = std::clamp(r + 0.5 - std::hypot(y - c, x - c), 0.0, 1.0);
          kernel.at(y, x) = w;
          total += w;
        }
      for (double& w : kernel.pixels) w /= total;
      img = convolve(img, kernel);
      return;
    }
    case CorruptionKind::glass_blur: {
      const auto delta = static_cast<std::ptrdiff_t>(p[1]);
      img = gaussian_blur(img, p[0]);
      const auto h = static_cast<std::ptrdiff_t>(img.height), w = static_cast<std::ptrdiff_t>(img.width);
      for (int it = 0; it < static_cast<int>(p[2]); ++it)
        for (std::ptrdiff_t y = h - delta - 1; y >= delta; --y)
          for (std::ptrdiff_t x = w - delta - 1; x >= delta; --x) {
            const auto dy = static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(2 * delta + 1))) - delta;
            const auto dx = static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(2 * delta + 1))) - delta;
            std::swap(img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)),
                      img.at(static_cast<std::size_t>(y + dy), static_cast<std::size_t>(x + dx)));
          }
      img = gaussian_blur(img, p[0]);
      return;
    }
    case CorruptionKind::gaussian_blur:
      img = gaussian_blur(img, p[0]);
      return;
    case CorruptionKind::motion_blur: {
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double length = p[0];
      const int taps = 2 * static_cast<int>(std::ceil(length)) + 1;
      Plane out(img.height, img.width);
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
          double acc = 0.0;
          for (int t = 0; t < taps; ++t) {
            const double s = length * (static_cast<double>(t) / (taps - 1) - 0.5);
            const double sy = std::clamp(y + s * std::sin(theta), 0.0, static_cast<double>(img.height - 1));
            const double sx = std::clamp(x + s * std::cos(theta), 0.0, static_cast<double>(img.width - 1));
            acc += sample(img, sy, sx);
          }
          out.at(y, x) = acc / taps;
        }
      img = std::move(out);
      return;
    }
    case CorruptionKind::zoom_blur: {
      Plane acc = img;
      int count = 1;
      for (double z = 1.0 + p[1]; z < p[0]; z += p[1], ++count) {
        const Plane zoomed = zoom_center(img, z);
        for (std::size_t i = 0; i < acc.pixels.size(); ++i) acc.pixels[i] += zoomed.pixels[i];
      }
      for (double& v : acc.pixels) v /= count;
      img = std::move(acc);
      return;
    }
    case CorruptionKind::fog: {
      const Plane plasma = plasma_fractal(std::max(img.height, img.width), p[1], rng);
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) img.at(y, x) += p[0] * plasma.at(y, x);
      const double denom = image_max + p[0];
      for (double& v : img.pixels) v = denom > 0 ? v * image_max / denom : v;
      return;
    }
    case CorruptionKind::brightness:
      for (double& v : img.pixels) v += p[0];
      return;
    case CorruptionKind::contrast: {
      double mean = 0.0;
      for (double v : img.pixels) mean += v;
      mean /= static_cast<double>(img.pixels.size());
      for (double& v : img.pixels) v = (v - mean) * p[0] + mean;
      return;
    }
    case CorruptionKind::elastic: {
      const double alpha = p[0] * size, sigma = p[1] * size;
      Plane fx(img.height, img.width), fy(img.height, img.width);
      for (double& v : fx.pixels) v = rng.uniform(-1.0, 1.0);
      for (double& v : fy.pixels) v = rng.uniform(-1.0, 1.0);
      fx = gaussian_blur(fx, sigma);
      fy = gaussian_blur(fy, sigma);
      double peak = 1e-12;
      for (std::size_t i = 0; i < fx.pixels.size(); ++i) peak = std::max({peak, std::abs(fx.pixels[i]), std::abs(fy.pixels[i])});
      Plane out(img.height, img.width);
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          out.at(y, x) = sample(img, y + alpha * fy.at(y, x) / peak, x + alpha * fx.at(y, x) / peak);
      img = std::move(out);
      return;
    }
    case CorruptionKind::pixelate: {
      const auto small_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.height * p[0])));
      const auto small_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.width * p[0])));
      Plane small(small_h, small_w), weight(small_h, small_w);
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
          const std::size_t sy = y * small_h / img.height, sx = x * small_w / img.width;
          small.at(sy, sx) += img.at(y, x);
          weight.at(sy, sx) += 1.0;
        }
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
          const std::size_t sy = y * small_h / img.height, sx = x * small_w / img.width;
          img.at(y, x) = small.at(sy, sx) / weight.at(sy, sx);
        }
      return;
    }
    case CorruptionKind::spatter:
      for (int b = 0; b < static_cast<int>(p[0]); ++b) {
        const double r = p[1] * size * rng.uniform(0.5, 1.5);
        const double cx = rng.uniform(0.0, static_cast<double>(img.width));
        const double cy = rng.uniform(0.0, static_cast<double>(img.height));
        draw_disk(img, cx, cy, r, rng.uniform(0.2, 0.8), p[2]);
      }
      return;
    case CorruptionKind::zigzag:
      for (int line = 0; line < static_cast<int>(p[0]); ++line) {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double ox = rng.uniform(0.0, static_cast<double>(img.width));
        const double oy = rng.uniform(0.0, static_cast<double>(img.height));
        const double seg = size / 5.0, amp = size * 0.12;
        const double ux = std::cos(theta), uy = std::sin(theta);
        auto vertex = [&](int k) {
          const double off = (k % 2 == 0 ? amp : -amp);
          return std::pair{ox + k * seg * ux - off * uy, oy + k * seg * uy + off * ux};
        };
        for (int k = -6; k < 6; ++k) {
          const auto [ax, ay] = vertex(k);
          const auto [bx, by] = vertex(k + 1);
          draw_segment(img, ax, ay, bx, by, 0.5, 1.0);
        }
      }
      return;
    case CorruptionKind::dotted_line:
      for (int line = 0; line < static_cast<int>(p[0]); ++line) {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double ox = rng.uniform(0.0, static_cast<double>(img.width));
        const double oy = rng.uniform(0.0, static_cast<double>(img.height));
        for (double t = -size; t <= size; t += p[1]) {
          const double cx = ox + t * std::cos(theta), cy = oy + t * std::sin(theta);
          if (cx < -1 || cy < -1 || cx > img.width || cy > img.height) continue;
          draw_disk(img, cx, cy, 0.6, 1.0, 1.0);
        }
      }
      return;
    case CorruptionKind::rotate: {
      const double deg = random_sign(rng) * rng.uniform(0.5 * p[0], p[0]);
      const double rad = deg * std::numbers::pi / 180.0;
      const double c = std::cos(rad), s = std::sin(rad);
      img = warp_inverse(img, Affine2{c, s, -s, c, 0, 0});
      return;
    }
    case CorruptionKind::scale: {
      const double factor = 1.0 + random_sign(rng) * rng.uniform(0.5 * p[0], p[0]);
      img = zoom_center(img, factor);
      return;
    }
    case CorruptionKind::shear: {
      const double k = random_sign(rng) * rng.uniform(0.5 * p[0], p[0]);
      img = warp_inverse(img, Affine2{1, -k, 0, 1, 0, 0});
      return;
    }
    case CorruptionKind::stripe: {
      const auto period = static_cast<std::size_t>(p[0]);
      const std::size_t offset = rng.below(period);
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          if ((x + offset) % period == 0) img.at(y, x) = 1.0 - img.at(y, x);
      return;
    }
    case CorruptionKind::translate: {
      const double shift = p[0] * size;
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      img = translate(img, shift * std::cos(theta), shift * std::sin(theta));
      return;
    }
    default:
      throw NotImplementedError("corruption '" + std::string(kind_name(kind)) + "' is not implemented");
  }
}

}  // namespace detail

/// Applies one corruption to a single [c,h,w] image with explicit parameters.
/// Output is NOT clipped; corrupt() clips.
inline void corrupt_image(CorruptionKind kind, const CorruptionParams& params, std::span<float> image,
                          std::size_t channels, std::size_t height, std::size_t width, Rng& rng) {
  if (!kind_implemented(kind))
    throw NotImplementedError("corruption '" + std::string(kind_name(kind)) + "' is part of the taxonomy but not implemented");
  const std::size_t hw = height * width;
  if (image.size() != channels * hw) throw ShapeError("corrupt_image: buffer does not match [c,h,w]");
  double image_max = 0.0;
  for (float v : image) image_max = std::max(image_max, static_cast<double>(v));
  const std::uint64_t channel_seed = rng.next_u64();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    imgops::Plane plane(height, width);
    for (std::size_t i = 0; i < hw; ++i) plane.pixels[i] = image[ch * hw + i];
    // Pixelwise noise is independent per channel; everything else is shared.
    const bool pixelwise = kind == CorruptionKind::gaussian_noise || kind == CorruptionKind::shot_noise ||
                           kind == CorruptionKind::impulse_noise || kind == CorruptionKind::speckle_noise;
    Rng channel_rng(pixelwise ? derive_seed(channel_seed, {ch}) : channel_seed);
    detail::corrupt_plane(kind, params, plane, channel_rng, image_max);
    for (std::size_t i = 0; i < hw; ++i) image[ch * hw + i] = static_cast<float>(plane.pixels[i]);
  }
}

/// Applies `params` to every image (unclipped values, for inspection).
inline Tensor<float> corrupt_images_unclipped(const Tensor<float>& images, CorruptionKind kind,
                                              const CorruptionParams& params, std::uint64_t seed) {
  Tensor<float> out = images;
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i, static_cast<std::uint64_t>(kind), 0xc0ffeeULL}));
    corrupt_image(kind, params, out.row(i), c, h, w, rng);
  }
  return out;
}

/// Corrupted copy of `images` clipped to [0,1]. Pure function of its inputs;
/// image i draws from its own stream derived from (seed, i).
inline Tensor<float> corrupt_images(const Tensor<float>& images, CorruptionKind kind, const CorruptionParams& params,
                                    std::uint64_t seed) {
  Tensor<float> out = corrupt_images_unclipped(images, kind, params, seed);
  for (float& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

/// Target-domain view of a labeled set. Sample order is preserved and the
/// labels travel along as evaluation-only reference labels.
inline UnlabeledDataset corrupt(const LabeledDataset& ds, const CorruptionSpec& spec) {
  UnlabeledDataset out;
  out.images = corrupt_images(ds.images, spec.kind, severity_params(spec.kind, spec.severity), spec.seed);
  out.name = ds.name + "-" + std::string(kind_name(spec.kind)) + "-s" + std::to_string(spec.severity);
  out.provenance = provenance_string(spec);
  out.reference_labels = ds.labels;
  out.num_classes = ds.num_classes;
  return out;
}

inline UnlabeledDataset corrupt(const UnlabeledDataset& ds, const CorruptionSpec& spec) {
  UnlabeledDataset out = ds;
  out.images = corrupt_images(ds.images, spec.kind, severity_params(spec.kind, spec.severity), spec.seed);
  out.name = ds.name + "-" + std::string(kind_name(spec.kind)) + "-s" + std::to_string(spec.severity);
  out.provenance = provenance_string(spec);
  return out;
}

}  // namespace dafr2
