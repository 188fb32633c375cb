#pragma once

#include <cmath>
#include <limits>

#include "dafr2/core/tensor.hpp"

namespace dafr2::nn {

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;
  std::vector<double> per_sample;
};

/// Softmax cross-entropy on logits [m,K], averaged over the batch.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("cross entropy: logits " + shape_string(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  const std::size_t m = logits.dim(0), k = logits.dim(1);
  LossResult<T> r{0.0, Tensor<T>(logits.shape()), std::vector<double>(m)};
  std::vector<double> p(k);
  for (std::size_t i = 0; i < m; ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ParameterError("cross entropy: label out of range");
    const T* row = logits.data() + i * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[j] = std::exp(row[j] - mx));
    const double lse = mx + std::log(z);
    r.per_sample[i] = lse - row[y];
    r.value += r.per_sample[i];
    for (std::size_t j = 0; j < k; ++j)
      r.grad[i * k + j] = static_cast<T>((p[j] / z - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(m));
  }
  r.value /= static_cast<double>(m);
  return r;
}

/// Mean over every element of (a - b)^2; gradient w.r.t. a only.
template <typename T>
LossResult<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  LossResult<T> r{0.0, Tensor<T>(a.shape()), {}};
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    r.value += d * d;
    r.grad[i] = static_cast<T>(2.0 * d / n);
  }
  r.value /= n;
  return r;
}

template <typename T>
std::vector<std::int64_t> argmax_rows(const Tensor<T>& logits) {
  const std::size_t m = logits.dim(0), k = logits.dim(1);
  std::vector<std::int64_t> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = logits.data() + i * k;
    out[i] = static_cast<std::int64_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

}  // namespace dafr2::nn
