#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "dafr2/core/error.hpp"
#include "dafr2/core/rng.hpp"

namespace dafr2::oracles {

/// y = h(x) + delta(x) with x uniform on the descriptor's interval.
struct DecompositionSpec {
  std::string h = "sin";  // sin | poly3 | mlp
  std::uint64_t h_seed = 0;  // weights of the mlp descriptor
  double noise_sigma = 0.3;
  double noise_bias = 0.0;  // E[delta|x]; non-zero breaks the contract on purpose
  std::size_t n_train = 20000;
  std::size_t n_test = 5000;
};

struct RecoveryResult {
  double test_mse_vs_h = 0.0;  // E[(f(x) - h(x))^2] on held-out x
  double noise_floor = 0.0;    // Var(delta)
  double offset = 0.0;         // E[f(x) - h(x)] on held-out x
  double train_mse = 0.0;      // against the noisy targets
  bool recovered = false;      // test_mse_vs_h <= 0.1 Var(delta) + slack
  bool offset_flag = false;    // f is shifted away from h
  bool capacity_flag = false;  // train MSE well above Var(delta)
};

namespace detail {

struct HFunction {
  double lo = -1.0, hi = 1.0;
  std::function<double(double)> f;
};

inline HFunction make_h(const DecompositionSpec& spec) {
  if (spec.h == "sin") return {-std::numbers::pi, std::numbers::pi, [](double x) { return std::sin(x); }};
  if (spec.h == "poly3") return {-1.5, 1.5, [](double x) { return x * x * x - x; }};
  if (spec.h == "mlp") {
    // fixed random 1-16-1 tanh network
    Rng rng(derive_seed(spec.h_seed, {0x41fULL}));
    std::vector<double> w1(16), b1(16), w2(16);
    for (int i = 0; i < 16; ++i) {
      w1[i] = rng.normal() * 1.5;
      b1[i] = rng.normal();
      w2[i] = rng.normal() / 4.0;
    }
    return {-2.0, 2.0, [w1, b1, w2](double x) {
              double y = 0.0;
              for (int i = 0; i < 16; ++i) y += w2[i] * std::tanh(w1[i] * x + b1[i]);
              return y;
            }};
  }
  throw ParameterError("regression oracle: unknown h '" + spec.h + "' (sin, poly3, mlp)");
}

/// Legendre P_0..P_deg at t in [-1,1].
inline Eigen::RowVectorXd legendre_row(double t, std::size_t deg) {
  Eigen::RowVectorXd p(static_cast<Eigen::Index>(deg + 1));
  p(0) = 1.0;
  if (deg >= 1) p(1) = t;
  for (std::size_t k = 2; k <= deg; ++k) {
    const auto kk = static_cast<double>(k);
    p(static_cast<Eigen::Index>(k)) = ((2 * kk - 1) * t * p(static_cast<Eigen::Index>(k - 1)) - (kk - 1) * p(static_cast<Eigen::Index>(k - 2))) / kk;
  }
  return p;
}

}  // namespace detail

/// Fits a Legendre polynomial of degree `capacity` to noisy samples by
/// least squares (QR) and measures how close it lands to h. A least-squares
/// fit converges to E[y|x], which is h exactly when E[delta|x] = 0.
inline RecoveryResult regression_recovery_oracle(const DecompositionSpec& spec, std::size_t capacity, std::uint64_t seed) {
  if (spec.n_train <= capacity + 1) throw ParameterError("regression oracle: n_train must exceed capacity + 1");
  if (spec.n_test == 0) throw ParameterError("regression oracle: n_test must be positive");
  if (spec.noise_sigma < 0) throw ParameterError("regression oracle: noise_sigma must be >= 0");
  const auto h = detail::make_h(spec);
  const auto p = static_cast<Eigen::Index>(capacity + 1);
  auto to_t = [&](double x) { return (2.0 * x - h.lo - h.hi) / (h.hi - h.lo); };

  Rng rng(derive_seed(seed, {0x7e9ULL}));
  Eigen::MatrixXd a(static_cast<Eigen::Index>(spec.n_train), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(spec.n_train));
  for (std::size_t i = 0; i < spec.n_train; ++i) {
    const double x = rng.uniform(h.lo, h.hi);
    a.row(static_cast<Eigen::Index>(i)) = detail::legendre_row(to_t(x), capacity);
    y(static_cast<Eigen::Index>(i)) = h.f(x) + spec.noise_bias + spec.noise_sigma * rng.normal();
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);

  RecoveryResult r;
  r.noise_floor = spec.noise_sigma * spec.noise_sigma;
  r.train_mse = (a * coef - y).squaredNorm() / static_cast<double>(spec.n_train);
  double se = 0.0, off = 0.0;
  for (std::size_t i = 0; i < spec.n_test; ++i) {
    const double x = rng.uniform(h.lo, h.hi);
    const double diff = detail::legendre_row(to_t(x), capacity).dot(coef) - h.f(x);
    se += diff * diff;
    off += diff;
  }
  r.test_mse_vs_h = se / static_cast<double>(spec.n_test);
  r.offset = off / static_cast<double>(spec.n_test);

  // Estimation error of an unbiased p-parameter fit is about Var(delta) p / n.
  const double slack = 10.0 * r.noise_floor * static_cast<double>(p) / static_cast<double>(spec.n_train) + 1e-6;
  r.recovered = r.test_mse_vs_h <= 0.1 * r.noise_floor + slack;
  const double offset_se = spec.noise_sigma / std::sqrt(static_cast<double>(spec.n_train));
  r.offset_flag = std::abs(r.offset) > 5.0 * offset_se + 1e-3;
  r.capacity_flag = r.train_mse > 1.5 * r.noise_floor + 1e-4;
  return r;
}

}  // namespace dafr2::oracles
