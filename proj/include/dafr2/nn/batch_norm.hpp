#pragma once

#include <cmath>

#include "dafr2/nn/layer.hpp"

namespace dafr2::nn {

/// Batch normalisation over the channel axis of [n,c] or [n,c,h,w] input.
///
/// Train mode normalises with batch statistics and folds them into the
/// running estimates with an exponential moving average (running variance uses
/// the unbiased batch variance). This happens on every train-mode forward,
/// whether or not a backward pass follows. Eval mode reads the running
/// statistics only.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps),
        gamma_("weight", Tensor<T>({channels}, T{1})), beta_("bias", Tensor<T>({channels})),
        running_mean_({channels}), running_var_({channels}, T{1}) {
    if (!(momentum > 0.0 && momentum <= 1.0)) throw ParameterError("batch norm momentum must be in (0,1]");
    if (!(eps > 0.0)) throw ParameterError("batch norm eps must be positive");
  }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    if (input.rank() < 2 || input.dim(1) != channels_)
      throw ShapeError("batch norm: expected channel axis of size " + std::to_string(channels_) + ", got " +
                       shape_string(input.shape()));
    const std::size_t n = input.dim(0), spatial = input.size() / (n * channels_);
    mode_ = mode;
    xhat_ = Tensor<T>(input.shape());
    inv_std_.assign(channels_, 0.0);
    Tensor<T> out(input.shape());

    if (mode == Mode::train && n < 2)
      throw ParameterError("batch norm: train mode needs at least 2 samples per batch, got " + std::to_string(n));

    const double count = static_cast<double>(n * spatial);
    for (std::size_t c = 0; c < channels_; ++c) {
      double mean, var;
      if (mode == Mode::train) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const T* p = input.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) sum += p[s];
        }
        mean = sum / count;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const T* p = input.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) sq += (p[s] - mean) * (p[s] - mean);
        }
        var = sq / count;
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * var * count / (count - 1.0));
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const double inv_std = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv_std;
      const double g = gamma_.value[c], b = beta_.value[c];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const double xh = (input[base + s] - mean) * inv_std;
          xhat_[base + s] = static_cast<T>(xh);
          out[base + s] = static_cast<T>(g * xh + b);
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const std::size_t n = xhat_.dim(0), spatial = xhat_.size() / (n * channels_);
    const double count = static_cast<double>(n * spatial);
    Tensor<T> dx(xhat_.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          sum_dy += grad_output[base + s];
          sum_dy_xhat += static_cast<double>(grad_output[base + s]) * xhat_[base + s];
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad[c] += static_cast<T>(sum_dy);
      const double g = gamma_.value[c], inv_std = inv_std_[c];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const double dy = grad_output[base + s];
          dx[base + s] = static_cast<T>(
              mode_ == Mode::train
                  ? g * inv_std * (dy - sum_dy / count - xhat_[base + s] * sum_dy_xhat / count)
                  : g * inv_std * dy);
        }
      }
    }
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<T>*>& out) override {
    gamma_.name = join_name(prefix, "weight");
    beta_.name = join_name(prefix, "bias");
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) override {
    out.push_back({join_name(prefix, "running_mean"), &running_mean_});
    out.push_back({join_name(prefix, "running_var"), &running_var_});
  }

  void collect_batch_norms(std::vector<BatchNorm<T>*>& out) override { out.push_back(this); }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }

  std::size_t channels() const { return channels_; }
  double momentum() const { return momentum_; }
  double eps() const { return eps_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  const Tensor<T>& running_var() const { return running_var_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  const Tensor<T>& gamma() const { return gamma_.value; }
  const Tensor<T>& beta() const { return beta_.value; }
  Parameter<T>& gamma_param() { return gamma_; }
  Parameter<T>& beta_param() { return beta_; }

 private:
  std::size_t channels_;
  double momentum_;
  double eps_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Mode mode_ = Mode::eval;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

}  // namespace dafr2::nn
