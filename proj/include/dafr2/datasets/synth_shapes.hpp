#pragma once

#include <cmath>

#include "dafr2/datasets/dataset.hpp"

namespace dafr2 {

enum class ShapeClass : std::int64_t { square = 0, circle = 1, cross = 2, triangle = 3 };

constexpr std::size_t kShapeClasses = 4;

namespace detail {

// Shape membership in coordinates relative to the shape centre, scaled so the
// shape spans [-1, 1] on both axes.
inline bool inside_shape(ShapeClass cls, double u, double v) {
  switch (cls) {
    case ShapeClass::square:
      return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    case ShapeClass::circle:
      return u * u + v * v <= 1.0;
    case ShapeClass::cross: {
      constexpr double arm = 1.0 / 3.0;
      return (std::abs(u) <= arm && std::abs(v) <= 1.0) || (std::abs(v) <= arm && std::abs(u) <= 1.0);
    }
    case ShapeClass::triangle:
      return v >= -1.0 && v <= 1.0 && std::abs(u) <= (v + 1.0) / 2.0;
  }
  return false;
}

}  // namespace detail

/// Deterministic four-class toy dataset: one filled shape per image at a random
/// position, size and intensity on a black background. Edges are anti-aliased
/// by 4x4 supersampling.
inline LabeledDataset synth_shapes(std::size_t n, std::uint64_t seed, std::size_t image_size) {
  if (n == 0) throw ParameterError("synth_shapes: n must be positive");
  if (image_size < 8) throw ParameterError("synth_shapes: image_size must be at least 8");

  LabeledDataset ds;
  ds.images = Tensor<float>({n, 1, image_size, image_size});
  ds.labels.resize(n);
  ds.num_classes = kShapeClasses;
  ds.name = "synth_shapes";

  const double size = static_cast<double>(image_size);
  constexpr int kSuper = 4;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i, 0x54a9e5ULL}));
    const auto cls = static_cast<ShapeClass>(rng.below(kShapeClasses));
    const double half = 0.5 * size * rng.uniform(0.3, 0.55);
    const double cx = rng.uniform(half, size - half);
    const double cy = rng.uniform(half, size - half);
    const double intensity = rng.uniform(0.35, 1.0);

    float* img = ds.images.data() + i * image_size * image_size;
    for (std::size_t y = 0; y < image_size; ++y) {
      for (std::size_t x = 0; x < image_size; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
            const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
            hits += detail::inside_shape(cls, (px - cx) / half, (py - cy) / half);
          }
        img[y * image_size + x] = static_cast<float>(intensity * hits / (kSuper * kSuper));
      }
    }
    ds.labels[i] = static_cast<std::int64_t>(cls);
  }
  ds.normalization = compute_normalization(ds.images);
  return ds;
}

}  // namespace dafr2
