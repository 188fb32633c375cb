#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "dafr2/core/error.hpp"

namespace dafr2 {

namespace detail {

/// Unbiased covariance; ridge 1e-6*trace/d when there are no more rows than
/// columns.
inline Eigen::MatrixXd fd_covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  const Eigen::Index m = x.rows(), d = x.cols();
  const Eigen::MatrixXd c = x.rowwise() - mean;
  Eigen::MatrixXd cov = m > 1 ? Eigen::MatrixXd(c.transpose() * c / static_cast<double>(m - 1)) : Eigen::MatrixXd::Zero(d, d);
  cov = 0.5 * (cov + cov.transpose());
  if (m <= d) {
    const double tr = cov.trace();
    cov.diagonal().array() += 1e-6 * (tr > 0 ? tr : 1.0) / static_cast<double>(d);
  }
  return cov;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2) between
/// Gaussian fits to the rows of a and b.
inline double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols())
    throw ShapeError("frechet distance: dimension " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  if (a.rows() < 1 || b.rows() < 1) throw ParameterError("frechet distance: empty sample");
  const Eigen::RowVectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
  const Eigen::MatrixXd sa = detail::fd_covariance(a, mu_a), sb = detail::fd_covariance(b, mu_b);
  const Eigen::MatrixXd root_a = detail::psd_sqrt(sa);
  Eigen::MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_cross;
  return std::max(0.0, fd);
}

}  // namespace dafr2
