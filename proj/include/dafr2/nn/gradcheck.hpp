#pragma once

#include <cmath>
#include <functional>

#include "dafr2/nn/layer.hpp"

namespace dafr2::nn {

struct GradCheckResult {
  std::string worst_name;
  double worst_rel_error = 0.0;
  std::size_t checked = 0;

  bool passed(double tol) const { return worst_rel_error < tol; }
};

namespace detail {

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

}  // namespace detail

/// Compares backward() against central differences of L = sum(r * f(x)) for a
/// fixed random r. Checks the input gradient and every parameter gradient.
/// Relative error is measured on the whole gradient vector of each tensor.
inline GradCheckResult gradient_check(Layer<double>& layer, const Tensor<double>& input, Mode mode, std::uint64_t seed,
                                      double h = 1e-6) {
  Rng rng(seed);
  std::vector<Parameter<double>*> params;
  layer.collect_parameters("", params);

  Tensor<double> probe = layer.forward(input, mode);
  Tensor<double> r(probe.shape());
  for (auto& v : r.values()) v = rng.normal();

  auto loss = [&](const Tensor<double>& x) {
    const Tensor<double> y = layer.forward(x, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };

  for (auto* p : params) p->zero_grad();
  layer.forward(input, mode);
  const Tensor<double> dx = layer.backward(r);

  GradCheckResult result;
  auto record = [&](const std::string& name, std::span<const double> analytic, std::span<const double> numeric) {
    const double e = detail::rel_error(analytic, numeric);
    result.checked += analytic.size();
    if (e >= result.worst_rel_error) {
      result.worst_rel_error = e;
      result.worst_name = name;
    }
  };

  {
    Tensor<double> x = input;
    std::vector<double> numeric(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i];
      x[i] = keep + h;
      const double up = loss(x);
      x[i] = keep - h;
      const double down = loss(x);
      x[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    record("input", dx.storage(), numeric);
  }
  for (auto* p : params) {
    const std::vector<double> analytic(p->grad.storage().begin(), p->grad.storage().end());
    std::vector<double> numeric(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss(input);
      p->value[i] = keep - h;
      const double down = loss(input);
      p->value[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    record(p->name, analytic, numeric);
  }
  return result;
}

}  // namespace dafr2::nn
