#pragma once

#include <cmath>
#include <numbers>

#include "dafr2/nn/layer.hpp"

namespace dafr2::nn {

/// SGD with heavy-ball momentum; weight decay is added to the gradient.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Parameter<T>*> params, double lr, double momentum, double weight_decay)
      : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    if (!(lr > 0.0)) throw ParameterError("sgd: learning rate must be positive");
    for (auto* p : params_) velocity_.emplace_back(p->value.shape());
  }

  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& v = velocity_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i] + weight_decay_ * p.value[i];
        v[i] = static_cast<T>(momentum_ * v[i] + g);
        p.value[i] = static_cast<T>(p.value[i] - lr_ * v[i]);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<T>> velocity_;
  double lr_, momentum_, weight_decay_;
};

/// Adam with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw ParameterError("adamw: learning rate must be positive");
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        const double m = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
        const double v = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
        m_[k][i] = static_cast<T>(m);
        v_[k][i] = static_cast<T>(v);
        double w = p.value[i] * (1.0 - lr_ * weight_decay_);
        w -= lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
        p.value[i] = static_cast<T>(w);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// eta_min + (base - eta_min)(1 + cos(pi * epoch / t_max)) / 2
inline double cosine_lr(double base, double eta_min, std::size_t epoch, std::size_t t_max) {
  if (t_max == 0) throw ParameterError("cosine schedule: t_max must be positive");
  const double e = static_cast<double>(std::min(epoch, t_max));
  return eta_min + (base - eta_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * e / static_cast<double>(t_max)));
}

}  // namespace dafr2::nn
