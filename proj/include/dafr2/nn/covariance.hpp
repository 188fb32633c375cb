#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "dafr2/core/error.hpp"
#include "dafr2/core/tensor.hpp"

namespace dafr2::nn {

struct CovarianceReport {
  Eigen::MatrixXd sigma;     // X^T X / m after centering
  Eigen::MatrixXd sigma_bn;  // covariance of standardised activations
  Eigen::MatrixXd eigvecs;   // columns, descending eigenvalue
  Eigen::VectorXd eigvals;
  Eigen::VectorXd feature_vars;
  double identity_gap = 0.0;  // ||sigma_bn - I||_F
  double max_eps_shrink = 0.0;  // largest eps/(var+eps) a real BN layer would add
};

/// Symmetric eigendecomposition, descending, each vector's largest-magnitude
/// component made positive.
inline void sorted_eigen(const Eigen::MatrixXd& a, Eigen::VectorXd& vals, Eigen::MatrixXd& vecs) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw ConsistencyError("eigendecomposition failed");
  const Eigen::Index d = a.rows();
  vals.resize(d);
  vecs.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    vals(i) = es.eigenvalues()(d - 1 - i);
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    vecs.col(i) = v;
  }
}

inline CovarianceReport bn_covariance_report(const Eigen::MatrixXd& x, double bn_eps = 1e-5) {
  const Eigen::Index m = x.rows(), d = x.cols();
  if (m < 2) throw ParameterError("covariance report needs m >= 2, got " + std::to_string(m));
  CovarianceReport r;
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  r.sigma = centered.transpose() * centered / static_cast<double>(m);
  r.sigma = 0.5 * (r.sigma + r.sigma.transpose());
  r.feature_vars = r.sigma.diagonal();
  sorted_eigen(r.sigma, r.eigvals, r.eigvecs);

  Eigen::VectorXd inv_sd(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(r.feature_vars(j) > 0.0)) throw ParameterError("covariance report: feature " + std::to_string(j) + " has zero variance");
    inv_sd(j) = 1.0 / std::sqrt(r.feature_vars(j));
    r.max_eps_shrink = std::max(r.max_eps_shrink, bn_eps / (r.feature_vars(j) + bn_eps));
  }
  const Eigen::MatrixXd z = centered * inv_sd.asDiagonal();
  r.sigma_bn = z.transpose() * z / static_cast<double>(m);
  r.sigma_bn = 0.5 * (r.sigma_bn + r.sigma_bn.transpose());
  r.identity_gap = (r.sigma_bn - Eigen::MatrixXd::Identity(d, d)).norm();
  return r;
}

template <typename T>
Eigen::MatrixXd to_matrix(const Tensor<T>& t) {
  if (t.rank() != 2) throw ShapeError("expected a [m,d] matrix, got " + shape_string(t.shape()));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t[i * t.dim(1) + j];
  return out;
}

template <typename T>
CovarianceReport bn_covariance_report(const Tensor<T>& feats_pre, double bn_eps = 1e-5) {
  return bn_covariance_report(to_matrix(feats_pre), bn_eps);
}

}  // namespace dafr2::nn
