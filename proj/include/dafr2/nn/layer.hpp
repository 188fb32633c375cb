#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dafr2/core/rng.hpp"
#include "dafr2/core/tensor.hpp"

namespace dafr2::nn {

enum class Mode { train, eval };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T{0}); }
};

/// Non-trainable state that must be checkpointed (BN running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

template <typename T>
class BatchNorm;

/// A differentiable layer. forward() caches what backward() needs; backward()
/// accumulates parameter gradients and returns the gradient w.r.t. the input
/// of the most recent forward().
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;
  virtual void collect_parameters(const std::string& /*prefix*/, std::vector<Parameter<T>*>& /*out*/) {}
  virtual void collect_buffers(const std::string& /*prefix*/, std::vector<BufferRef<T>>& /*out*/) {}
  virtual void collect_batch_norms(std::vector<BatchNorm<T>*>& /*out*/) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// He-normal initialisation (fan_out, ReLU gain).
template <typename T>
void kaiming_normal(Tensor<T>& t, std::size_t fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_out));
  for (auto& v : t.values()) v = static_cast<T>(stddev * rng.normal());
}

template <typename T>
void uniform_init(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace dafr2::nn
