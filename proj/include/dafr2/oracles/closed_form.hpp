#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dafr2/core/error.hpp"
#include "dafr2/core/rng.hpp"

namespace dafr2::oracles {

/// I(X;Y) in nats for a bivariate normal with correlation rho.
inline double gaussian_mi_oracle(double rho) {
  if (!(std::abs(rho) < 1.0)) throw ParameterError("gaussian MI oracle: |rho| must be < 1, got " + std::to_string(rho));
  return -0.5 * std::log1p(-rho * rho);
}

/// Frechet distance between N(mu1, diag(var1)) and N(mu2, diag(var2)).
inline double fd_diagonal_oracle(const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1, const Eigen::VectorXd& mu2,
                                 const Eigen::VectorXd& var2) {
  const auto d = mu1.size();
  if (var1.size() != d || mu2.size() != d || var2.size() != d) throw ShapeError("fd oracle: parameter lengths differ");
  if ((var1.array() < 0).any() || (var2.array() < 0).any()) throw ParameterError("fd oracle: variances must be non-negative");
  return (mu1 - mu2).squaredNorm() + (var1.cwiseSqrt() - var2.cwiseSqrt()).squaredNorm();
}

struct PowerIterationResult {
  double sigma_max = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration on W^T W, stopped once the
/// estimate moves by less than rel_tol between iterations and the
/// eigen-residual ||W^T W v - s^2 v|| is below rel_tol * s^2.
inline PowerIterationResult linear_lipschitz_oracle_detailed(const Eigen::MatrixXd& w, double rel_tol = 1e-8,
                                                             std::size_t max_iter = 100000, std::uint64_t seed = 0) {
  if (!w.allFinite()) throw ParameterError("lipschitz oracle: W has non-finite entries");
  PowerIterationResult r;
  if (w.size() == 0 || w.norm() == 0.0) {
    r.converged = true;
    return r;
  }
  const Eigen::MatrixXd g = w.transpose() * w;
  Rng rng(derive_seed(seed, {0x9a1ULL}));
  Eigen::VectorXd v(w.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  v.normalize();
  double lambda = 0.0;
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    const Eigen::VectorXd gv = g * v;
    const double next = v.dot(gv);
    const double residual = (gv - next * v).norm();
    v = gv.normalized();
    const bool settled = std::abs(next - lambda) <= rel_tol * std::abs(next) && residual <= rel_tol * std::abs(next);
    lambda = next;
    if (settled) {
      r.converged = true;
      break;
    }
  }
  r.sigma_max = std::sqrt(std::max(0.0, lambda));
  return r;
}

inline double linear_lipschitz_oracle(const Eigen::MatrixXd& w) { return linear_lipschitz_oracle_detailed(w).sigma_max; }

}  // namespace dafr2::oracles
