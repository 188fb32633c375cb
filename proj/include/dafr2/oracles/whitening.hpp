#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dafr2/core/error.hpp"
#include "dafr2/core/rng.hpp"

namespace dafr2::oracles {

struct CorrelationStructure {
  enum class Kind { identity, diagonal, equicorrelated, explicit_matrix } kind = Kind::identity;
  Eigen::VectorXd variances;  // diagonal; empty means 1..d
  double rho = 0.0;           // equicorrelated, unit variances
  Eigen::MatrixXd covariance; // explicit_matrix

  static CorrelationStructure identity() { return {}; }
  static CorrelationStructure diagonal(Eigen::VectorXd v = {}) { return {Kind::diagonal, std::move(v), 0.0, {}}; }
  static CorrelationStructure equicorrelated(double rho) { return {Kind::equicorrelated, {}, rho, {}}; }
  static CorrelationStructure explicit_matrix(Eigen::MatrixXd c) { return {Kind::explicit_matrix, {}, 0.0, std::move(c)}; }
};

inline Eigen::MatrixXd covariance_of(const CorrelationStructure& s, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  using K = CorrelationStructure::Kind;
  switch (s.kind) {
    case K::identity:
      return Eigen::MatrixXd::Identity(n, n);
    case K::diagonal: {
      if (s.variances.size() == 0) return Eigen::VectorXd::LinSpaced(n, 1.0, static_cast<double>(d)).asDiagonal();
      if (s.variances.size() != n) throw ShapeError("whitening oracle: " + std::to_string(s.variances.size()) + " variances for d=" + std::to_string(d));
      return s.variances.asDiagonal();
    }
    case K::equicorrelated: {
      Eigen::MatrixXd c = Eigen::MatrixXd::Constant(n, n, s.rho);
      c.diagonal().setOnes();
      return c;
    }
    case K::explicit_matrix:
      if (s.covariance.rows() != n || s.covariance.cols() != n) throw ShapeError("whitening oracle: covariance is not d x d");
      return s.covariance;
  }
  throw ParameterError("whitening oracle: unknown structure");
}

struct WhiteningResult {
  Eigen::MatrixXd sigma_bn;
  double gap = 0.0;  // ||sigma_bn - I||_F
  Eigen::MatrixXd data;
};

namespace detail {

/// Symmetric square root; throws when the matrix is not PSD.
inline Eigen::MatrixXd psd_root_checked(const Eigen::MatrixXd& c) {
  if (!c.isApprox(c.transpose(), 1e-12)) throw ParameterError("whitening oracle: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -tol)
    throw ParameterError("whitening oracle: requested covariance is not positive semi-definite (min eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Draws m rows with covariance C, standardises each feature by its own mean
/// and (biased) standard deviation and returns the covariance of the result.
/// With exact_moments the Gaussian draw is first whitened in-sample so the
/// data's covariance is C exactly; otherwise C only holds in expectation and
/// the gap carries O(d/sqrt(m)) sampling noise.
inline WhiteningResult whitening_oracle(std::size_t d, std::size_t m, const CorrelationStructure& structure, std::uint64_t seed,
                                        bool exact_moments = true) {
  if (d == 0) throw ParameterError("whitening oracle: d must be positive");
  if (m <= d) throw ParameterError("whitening oracle: need m > d");
  const Eigen::MatrixXd c = covariance_of(structure, d);
  const Eigen::MatrixXd root = detail::psd_root_checked(c);

  const auto rows = static_cast<Eigen::Index>(m), cols = static_cast<Eigen::Index>(d);
  Rng rng(seed);
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = rng.normal();
  if (exact_moments) {
    z = z.rowwise() - z.colwise().mean();
    const Eigen::MatrixXd s = z.transpose() * z / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    z = z * (es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose());
  }
  WhiteningResult r;
  r.data = z * root;

  Eigen::MatrixXd x = r.data.rowwise() - r.data.colwise().mean();
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(m));
    if (!(sd > 0)) throw ParameterError("whitening oracle: feature " + std::to_string(j) + " has zero variance");
    x.col(j) /= sd;
  }
  r.sigma_bn = x.transpose() * x / static_cast<double>(m);
  r.gap = (r.sigma_bn - Eigen::MatrixXd::Identity(cols, cols)).norm();
  return r;
}

/// Gap of already-generated data, for checking invariances.
inline double identity_gap(const Eigen::MatrixXd& data) {
  const auto m = static_cast<double>(data.rows());
  Eigen::MatrixXd x = data.rowwise() - data.colwise().mean();
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) /= std::sqrt(x.col(j).squaredNorm() / m);
  return (x.transpose() * x / m - Eigen::MatrixXd::Identity(x.cols(), x.cols())).norm();
}

}  // namespace dafr2::oracles
