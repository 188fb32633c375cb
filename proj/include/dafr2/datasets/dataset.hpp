#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dafr2/core/error.hpp"
#include "dafr2/core/rng.hpp"
#include "dafr2/core/tensor.hpp"

namespace dafr2 {

/// Per-channel input standardization applied on the model side.
struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;

  bool empty() const { return mean.empty(); }
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Images in [0,1] with class ids in [0, num_classes).
struct LabeledDataset {
  Tensor<float> images;  // [n, c, h, w]
  std::vector<std::int64_t> labels;
  std::size_t num_classes = 0;
  std::string name;
  Normalization normalization;
  std::string provenance = "natural";

  std::size_t size() const { return images.rank() == 0 ? 0 : images.dim(0); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
};

/// Target-domain images. `reference_labels` rides along for evaluation only;
/// the trainer never reads it.
struct UnlabeledDataset {
  Tensor<float> images;
  std::string name;
  std::string provenance = "natural";
  std::optional<std::vector<std::int64_t>> reference_labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.rank() == 0 ? 0 : images.dim(0); }
};

inline void check_image_tensor(const Tensor<float>& images, const std::string& what) {
  if (images.rank() != 4) throw ShapeError(what + ": images must be [n,c,h,w], got " + shape_string(images.shape()));
  for (float v : images.values())
    if (!(v >= 0.0f && v <= 1.0f)) throw ParameterError(what + ": pixel value outside [0,1]");
}

inline void validate(const LabeledDataset& ds) {
  check_image_tensor(ds.images, ds.name);
  if (ds.labels.size() != ds.size())
    throw ConsistencyError(ds.name + ": " + std::to_string(ds.size()) + " images but " +
                           std::to_string(ds.labels.size()) + " labels");
  for (auto y : ds.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes)
      throw ParameterError(ds.name + ": label " + std::to_string(y) + " outside [0," +
                           std::to_string(ds.num_classes) + ")");
}

inline void validate(const UnlabeledDataset& ds) {
  check_image_tensor(ds.images, ds.name);
  if (ds.reference_labels && ds.reference_labels->size() != ds.size())
    throw ConsistencyError(ds.name + ": reference label count does not match image count");
}

/// Per-channel mean and standard deviation over all pixels.
inline Normalization compute_normalization(const Tensor<float>& images) {
  const std::size_t n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3);
  Normalization norm{std::vector<float>(c), std::vector<float>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = images.data() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum += p[k];
        sq += static_cast<double>(p[k]) * p[k];
      }
    }
    const double count = static_cast<double>(n * hw);
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    norm.mean[ch] = static_cast<float>(mean);
    norm.stddev[ch] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return norm;
}

inline LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.images = gather_rows(ds.images, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(ds.labels.at(i));
  out.num_classes = ds.num_classes;
  out.name = ds.name;
  out.normalization = ds.normalization;
  out.provenance = ds.provenance;
  return out;
}

inline UnlabeledDataset subset(const UnlabeledDataset& ds, std::span<const std::size_t> indices) {
  UnlabeledDataset out;
  out.images = gather_rows(ds.images, indices);
  out.name = ds.name;
  out.provenance = ds.provenance;
  out.num_classes = ds.num_classes;
  if (ds.reference_labels) {
    out.reference_labels.emplace();
    for (auto i : indices) out.reference_labels->push_back(ds.reference_labels->at(i));
  }
  return out;
}

/// Drops the labels from the trainer's view but keeps them for evaluation.
inline UnlabeledDataset as_unlabeled(const LabeledDataset& ds) {
  return UnlabeledDataset{ds.images, ds.name, ds.provenance, ds.labels, ds.num_classes};
}

/// Reattaches evaluation labels to a target-domain set.
inline LabeledDataset with_reference_labels(const UnlabeledDataset& ds, const Normalization& normalization = {}) {
  if (!ds.reference_labels) throw ParameterError(ds.name + ": dataset carries no labels");
  LabeledDataset out;
  out.images = ds.images;
  out.labels = *ds.reference_labels;
  out.num_classes = ds.num_classes;
  if (out.num_classes == 0)
    for (auto y : out.labels) out.num_classes = std::max<std::size_t>(out.num_classes, static_cast<std::size_t>(y) + 1);
  out.name = ds.name;
  out.provenance = ds.provenance;
  out.normalization = normalization;
  return out;
}

/// Partitions row indices 0..n-1 into consecutive chunks of a seeded permutation.
inline std::vector<std::vector<std::size_t>> split_indices(std::size_t n, const std::vector<double>& fractions,
                                                           std::uint64_t seed) {
  if (fractions.empty()) throw ParameterError("split: no fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ParameterError("split: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("split: fractions must sum to 1");

  Rng rng(derive_seed(seed, {0x5b117ULL}));
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> parts;
  std::size_t begin = 0;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    cumulative += fractions[k];
    const std::size_t end =
        k + 1 == fractions.size() ? n : std::min(n, static_cast<std::size_t>(std::llround(cumulative * n)));
    if (end <= begin) throw ParameterError("split: part " + std::to_string(k) + " would be empty");
    parts.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(end));
    begin = end;
  }
  return parts;
}

template <typename Dataset>
std::vector<Dataset> split(const Dataset& ds, const std::vector<double>& fractions, std::uint64_t seed) {
  std::vector<Dataset> out;
  for (const auto& part : split_indices(ds.size(), fractions, seed)) out.push_back(subset(ds, part));
  return out;
}

/// How an epoch is cut into mini-batches.
struct BatchPlan {
  std::size_t batch_size = 128;
  std::uint64_t shuffle_seed = 0;
  bool drop_last = false;
};

/// Index batches for one epoch. The order depends only on (plan, n, epoch).
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, const BatchPlan& plan, std::uint64_t epoch) {
  if (plan.batch_size == 0) throw ParameterError("batch size must be positive");
  Rng rng(derive_seed(plan.shuffle_seed, {epoch, 0xba7c4ULL}));
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += plan.batch_size) {
    const std::size_t end = std::min(n, begin + plan.batch_size);
    if (plan.drop_last && end - begin < plan.batch_size) break;
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

/// Endless stream of batches that reshuffles on every pass over the data.
class BatchStream {
 public:
  BatchStream(std::size_t n, BatchPlan plan) : n_(n), plan_(plan) {
    if (n == 0) throw ParameterError("cannot stream an empty dataset");
  }

  const std::vector<std::size_t>& next() {
    if (cursor_ >= current_.size()) {
      current_ = epoch_batches(n_, plan_, pass_++);
      cursor_ = 0;
      if (current_.empty()) throw ParameterError("batch plan yields no batches");
    }
    return current_[cursor_++];
  }

 private:
  std::size_t n_;
  BatchPlan plan_;
  std::uint64_t pass_ = 0;
  std::vector<std::vector<std::size_t>> current_;
  std::size_t cursor_ = 0;
};

}  // namespace dafr2
