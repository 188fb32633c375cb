#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "dafr2/core/rng.hpp"
#include "dafr2/core/tensor.hpp"
#include "dafr2/analysis/views.hpp"

namespace dafr2 {

/// A batched differentiable map. forward takes [B, ...input_shape] and
/// returns [B, k]; backward maps dL/dy [B, k] to dL/dx for the last forward.
/// Samples in a batch must not interact (eval-mode BN is fine).
struct ProbeModel {
  std::function<Tensor<double>(const Tensor<double>&)> forward;
  std::function<Tensor<double>(const Tensor<double>&)> backward;
};

struct LipschitzResult {
  double value = 0.0;
  std::size_t argmax = 0;
  std::size_t n_samples = 0;
};

/// max_i || d/dx ||f(x_i)||_2 || over x_i ~ N(0, I). Probe i is drawn from a
/// stream derived from (seed, i) alone, so raising n_samples only adds probes
/// and the estimate never decreases.
inline LipschitzResult local_lipschitz(const ProbeModel& model, std::size_t n_samples, const Shape& input_shape,
                                       std::uint64_t seed, std::size_t batch = 256) {
  if (n_samples == 0) throw ParameterError("local_lipschitz: n_samples must be >= 1");
  if (batch == 0) throw ParameterError("local_lipschitz: batch must be >= 1");
  const std::size_t dim = shape_size(input_shape);
  LipschitzResult best;
  best.n_samples = n_samples;
  for (std::size_t begin = 0; begin < n_samples; begin += batch) {
    const std::size_t m = std::min(batch, n_samples - begin);
    Shape shape{m};
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    Tensor<double> x(shape);
    for (std::size_t i = 0; i < m; ++i) {
      Rng rng(derive_seed(seed, {begin + i, 0x11cULL}));
      for (std::size_t j = 0; j < dim; ++j) x[i * dim + j] = rng.normal();
    }
    const Tensor<double> y = model.forward(x);
    if (y.rank() != 2 || y.dim(0) != m) throw ShapeError("local_lipschitz: model output must be [B,k]");
    const std::size_t k = y.dim(1);
    Tensor<double> gy(y.shape());
    for (std::size_t i = 0; i < m; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < k; ++j) norm += y[i * k + j] * y[i * k + j];
      norm = std::sqrt(norm);
      if (norm > 0)
        for (std::size_t j = 0; j < k; ++j) gy[i * k + j] = y[i * k + j] / norm;
    }
    const Tensor<double> gx = model.backward(gy);
    for (std::size_t i = 0; i < m; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < dim; ++j) sq += gx[i * dim + j] * gx[i * dim + j];
      const double g = std::sqrt(sq);
      if (!std::isfinite(g)) throw InstabilityError("local_lipschitz: non-finite gradient at probe " + std::to_string(begin + i));
      if (g > best.value) {
        best.value = g;
        best.argmax = begin + i;
      }
    }
  }
  return best;
}

/// x -> g(f(x)), with x in normalised input space and everything in eval mode.
inline ProbeModel classifier_probe(const ModelView& v) {
  ProbeModel m;
  m.forward = [v](const Tensor<double>& x) { return v.g->forward(v.f->forward_normalized(x.cast<float>(), nn::Mode::eval)).cast<double>(); };
  m.backward = [v](const Tensor<double>& gy) { return v.f->backward(v.g->backward(gy.cast<float>())).cast<double>(); };
  return m;
}

/// x -> W x on flat inputs of length W.cols().
inline ProbeModel linear_probe(const Eigen::MatrixXd& w) {
  ProbeModel m;
  m.forward = [w](const Tensor<double>& x) {
    const std::size_t b = x.dim(0), in = static_cast<std::size_t>(w.cols()), out = static_cast<std::size_t>(w.rows());
    if (x.size() != b * in) throw ShapeError("linear_probe: input width does not match W");
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(x.data(), static_cast<Eigen::Index>(b),
                                                                                                   w.cols());
    Tensor<double> y({b, out});
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(y.data(), static_cast<Eigen::Index>(b), w.rows()) =
        xm * w.transpose();
    return y;
  };
  m.backward = [w](const Tensor<double>& gy) {
    const std::size_t b = gy.dim(0), in = static_cast<std::size_t>(w.cols());
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> g(gy.data(), static_cast<Eigen::Index>(b),
                                                                                                  w.rows());
    Tensor<double> gx({b, in});
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(gx.data(), static_cast<Eigen::Index>(b), w.cols()) = g * w;
    return gx;
  };
  return m;
}

inline Shape view_input_shape(const ModelView& v, std::size_t height, std::size_t width) {
  return {v.f->config().in_channels, height, width};
}

}  // namespace dafr2
