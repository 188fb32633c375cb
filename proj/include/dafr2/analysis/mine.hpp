#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dafr2/datasets/dataset.hpp"
#include "dafr2/nn/layers.hpp"
#include "dafr2/nn/optim.hpp"

namespace dafr2 {

struct MineConfig {
  std::size_t hidden_width = 256;
  std::size_t steps = 2000;
  std::size_t batch = 512;
  double lr = 1e-3;
  double ema_decay = 0.99;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 1) throw ParameterError("mine: steps must be >= 1");
    if (batch < 2) throw ParameterError("mine: batch must be >= 2");
    if (!(ema_decay > 0 && ema_decay < 1)) throw ParameterError("mine: ema_decay must be in (0,1)");
    if (!(lr > 0)) throw ParameterError("mine: lr must be positive");
    if (hidden_width == 0) throw ParameterError("mine: hidden_width must be positive");
  }
};

struct MineResult {
  double estimate = 0.0;  // nats
  std::vector<double> objectives;
};

namespace detail {

inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = x.rowwise() - x.colwise().mean();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(z.rows()));
    if (sd > 0) z.col(j) /= sd;
  }
  return z;
}

}  // namespace detail

/// Donsker-Varadhan lower bound on I(a;b), maximised over a 2-hidden-layer
/// statistics network T. The gradient of log E_marginal[e^T] uses a moving
/// average of E[e^T] in its denominator to cut mini-batch bias. Marginal
/// pairs come from permuting b within the batch. Each input column is
/// standardised first. The estimate is the median objective over the last
/// 10% of steps.
inline MineResult estimate_mi_detailed(const Eigen::MatrixXd& a_raw, const Eigen::MatrixXd& b_raw, const MineConfig& cfg) {
  cfg.validate();
  if (a_raw.rows() != b_raw.rows()) throw ShapeError("mine: views must be row-aligned");
  const auto n = static_cast<std::size_t>(a_raw.rows());
  if (n < 2) throw ParameterError("mine: need at least 2 joint samples");
  if (!a_raw.allFinite() || !b_raw.allFinite()) throw ParameterError("mine: inputs contain non-finite values");
  const Eigen::MatrixXd a = detail::standardize_columns(a_raw), b = detail::standardize_columns(b_raw);
  const auto da = static_cast<std::size_t>(a.cols()), db = static_cast<std::size_t>(b.cols());

  Rng init(derive_seed(cfg.seed, {0x3171eULL}));
  nn::Sequential<float> net;
  net.add("fc1", std::make_unique<nn::Linear<float>>(da + db, cfg.hidden_width, init))
      .add("relu1", std::make_unique<nn::ReLU<float>>())
      .add("fc2", std::make_unique<nn::Linear<float>>(cfg.hidden_width, cfg.hidden_width, init))
      .add("relu2", std::make_unique<nn::ReLU<float>>())
      .add("out", std::make_unique<nn::Linear<float>>(cfg.hidden_width, 1, init));
  std::vector<nn::Parameter<float>*> params;
  net.collect_parameters("", params);
  nn::AdamW<float> opt(params, cfg.lr, 0.0);

  const std::size_t bs = std::min(cfg.batch, n);
  BatchStream stream(n, {bs, derive_seed(cfg.seed, {0xba7cULL}), true});
  Rng perm_rng(derive_seed(cfg.seed, {0x9e53ULL}));

  auto fill = [&](const std::vector<std::size_t>& rows_a, const std::vector<std::size_t>& rows_b) {
    Tensor<float> x({rows_a.size(), da + db});
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
      float* r = x.data() + i * (da + db);
      for (std::size_t j = 0; j < da; ++j) r[j] = static_cast<float>(a(static_cast<Eigen::Index>(rows_a[i]), static_cast<Eigen::Index>(j)));
      for (std::size_t j = 0; j < db; ++j)
        r[da + j] = static_cast<float>(b(static_cast<Eigen::Index>(rows_b[i]), static_cast<Eigen::Index>(j)));
    }
    return x;
  };

  MineResult result;
  result.objectives.reserve(cfg.steps);
  double ema = -1.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto& rows = stream.next();
    const std::size_t m = rows.size();
    const auto perm = perm_rng.permutation(m);
    std::vector<std::size_t> shuffled(m);
    for (std::size_t i = 0; i < m; ++i) shuffled[i] = rows[perm[i]];

    opt.zero_grad();
    const auto t_joint = net.forward(fill(rows, rows), nn::Mode::train);
    double mean_joint = 0.0;
    for (float v : t_joint.values()) mean_joint += v;
    mean_joint /= static_cast<double>(m);
    net.backward(Tensor<float>(t_joint.shape(), static_cast<float>(-1.0 / static_cast<double>(m))));

    const auto t_marg = net.forward(fill(rows, shuffled), nn::Mode::train);
    double mx = -std::numeric_limits<double>::infinity();
    for (float v : t_marg.values()) mx = std::max(mx, static_cast<double>(v));
    double sum_exp = 0.0;  // scaled by e^-mx
    for (float v : t_marg.values()) sum_exp += std::exp(v - mx);
    const double log_mean_exp = mx + std::log(sum_exp / static_cast<double>(m));
    const double objective = mean_joint - log_mean_exp;
    if (!std::isfinite(objective))
      throw InstabilityError("mine: objective became non-finite at step " + std::to_string(step) + "; try a smaller lr");

    const double mean_exp = std::exp(log_mean_exp);
    ema = ema < 0 ? mean_exp : cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * mean_exp;
    Tensor<float> g(t_marg.shape());
    for (std::size_t i = 0; i < m; ++i)
      g[i] = static_cast<float>(std::exp(static_cast<double>(t_marg[i]) - log_mean_exp) * mean_exp / (ema * static_cast<double>(m)));
    net.backward(g);
    opt.step();
    result.objectives.push_back(objective);
  }

  const std::size_t tail = std::max<std::size_t>(1, cfg.steps / 10);
  std::vector<double> last(result.objectives.end() - static_cast<std::ptrdiff_t>(tail), result.objectives.end());
  std::nth_element(last.begin(), last.begin() + static_cast<std::ptrdiff_t>(tail / 2), last.end());
  double median = last[tail / 2];
  if (tail % 2 == 0) {
    const double lower = *std::max_element(last.begin(), last.begin() + static_cast<std::ptrdiff_t>(tail / 2));
    median = 0.5 * (median + lower);
  }
  result.estimate = median;
  return result;
}

inline double estimate_mi(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const MineConfig& cfg) {
  return estimate_mi_detailed(a, b, cfg).estimate;
}

}  // namespace dafr2
