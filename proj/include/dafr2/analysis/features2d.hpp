#pragma once

#include <cmath>
#include <sstream>

#include "dafr2/analysis/views.hpp"
#include "dafr2/nn/optim.hpp"

namespace dafr2 {

enum class Projection { native, linear_probe };

inline std::string_view projection_name(Projection p) { return p == Projection::native ? "native" : "linear_probe"; }

struct Feature2DRow {
  double x = 0.0, y = 0.0;
  std::int64_t label = -1;
  std::string domain;
  std::string route;
};

struct Feature2DTable {
  Projection projection = Projection::native;
  std::vector<Feature2DRow> rows;

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(9);
    out << "# projection=" << projection_name(projection) << "\nx,y,label,domain,route\n";
    for (const auto& r : rows) out << r.x << ',' << r.y << ',' << r.label << ',' << r.domain << ',' << r.route << '\n';
    return out.str();
  }

  Eigen::MatrixXd points(std::string_view domain, std::string_view route) const {
    std::vector<const Feature2DRow*> sel;
    for (const auto& r : rows)
      if (r.domain == domain && r.route == route) sel.push_back(&r);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(sel.size()), 2);
    for (std::size_t i = 0; i < sel.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) = sel[i]->x;
      m(static_cast<Eigen::Index>(i), 1) = sel[i]->y;
    }
    return m;
  }
};

struct DomainSet {
  std::string domain;  // "source", "target", ...
  const LabeledDataset* data = nullptr;
};

struct ProbeConfig {
  std::size_t steps = 500;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

/// 2E|X-Y| - E|X-X'| - E|Y-Y'| between point clouds.
inline double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ParameterError("energy distance: empty sample");
  auto mean_dist = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < q.rows(); ++j) s += (p.row(i) - q.row(j)).norm();
    return s / static_cast<double>(p.rows() * q.rows());
  };
  return 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
}

/// Energy distance divided by 2E|X-Y|: 0 for identical laws, 1 at most,
/// and unchanged by rescaling both clouds.
inline double energy_coefficient(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double cross = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) cross += (a.row(i) - b.row(j)).norm();
  cross /= static_cast<double>(a.rows() * b.rows());
  return cross > 0 ? energy_distance(a, b) / (2.0 * cross) : 0.0;
}

namespace detail {

/// Fits P (d->2) and C (2->K) jointly by cross-entropy on labelled embeddings
/// and returns P. Embeddings are standardised first; the returned map
/// includes that step.
struct LinearProbe {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  Eigen::MatrixXd w;  // [d,2]
  Eigen::RowVector2d b;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& e) const {
    Eigen::MatrixXd z = (e.rowwise() - mean).array().rowwise() / scale.array();
    return (z * w).rowwise() + b;
  }
};

inline LinearProbe fit_linear_probe(const Eigen::MatrixXd& e, std::span<const std::int64_t> labels, std::size_t k, const ProbeConfig& cfg) {
  const auto m = static_cast<std::size_t>(e.rows()), d = static_cast<std::size_t>(e.cols());
  LinearProbe probe;
  probe.mean = e.colwise().mean();
  probe.scale = ((e.rowwise() - probe.mean).array().square().colwise().sum() / static_cast<double>(std::max<std::size_t>(m, 1))).sqrt();
  for (Eigen::Index j = 0; j < probe.scale.size(); ++j)
    if (!(probe.scale(j) > 0)) probe.scale(j) = 1.0;
  const Eigen::MatrixXd z = (e.rowwise() - probe.mean).array().rowwise() / probe.scale.array();

  Rng rng(derive_seed(cfg.seed, {0x2d9eULL}));
  nn::Linear<double> proj(d, 2, rng), cls(2, k, rng);
  std::vector<nn::Parameter<double>*> params;
  proj.collect_parameters("p.", params);
  cls.collect_parameters("c.", params);
  nn::AdamW<double> opt(params, cfg.lr, 0.0);
  Tensor<double> x({m, d});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    const auto logits = cls.forward(proj.forward(x, nn::Mode::train), nn::Mode::train);
    const auto ce = nn::cross_entropy(logits, labels);
    proj.backward(cls.backward(ce.grad));
    opt.step();
  }
  const auto& w = proj.weight().value;  // [2,d]
  probe.w.resize(static_cast<Eigen::Index>(d), 2);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t j = 0; j < d; ++j) probe.w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(o)) = w[o * d + j];
  probe.b << proj.bias().value[0], proj.bias().value[1];
  return probe;
}

}  // namespace detail

/// Embeds every domain set under both routes and reduces to 2-D. With a
/// 2-D embedding the coordinates are the embeddings themselves; otherwise a
/// linear probe is fitted per route on the first domain set (the source) and
/// applied to all of them, and the table says so.
inline Feature2DTable export_features_2d(Bundle& baseline, Bundle& adapted, const std::vector<DomainSet>& sets,
                                         const ProbeConfig& probe_cfg = {}) {
  Feature2DTable table;
  const std::size_t d = baseline.f_s.embedding_dim();
  table.projection = d == 2 ? Projection::native : Projection::linear_probe;
  std::size_t total = 0;
  for (const auto& s : sets) total += s.data ? s.data->size() : 0;
  if (total == 0) return table;

  for (Route route : {Route::baseline, Route::adapted}) {
    const auto view = route_view(baseline, adapted, route);
    std::vector<Eigen::MatrixXd> emb;
    for (const auto& s : sets) emb.push_back(s.data->size() ? embed_matrix(view, s.data->images) : Eigen::MatrixXd(0, static_cast<Eigen::Index>(d)));
    std::optional<detail::LinearProbe> probe;
    if (table.projection == Projection::linear_probe) {
      const auto& src = sets.front();
      if (src.data->labels.size() != src.data->size() || src.data->size() == 0)
        throw ParameterError("features2d: the linear probe needs a labelled, non-empty first set");
      probe = detail::fit_linear_probe(emb.front(), src.data->labels, baseline.num_classes, probe_cfg);
    }
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const Eigen::MatrixXd p = probe ? probe->apply(emb[s]) : emb[s];
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const auto& lab = sets[s].data->labels;
        table.rows.push_back({p(i, 0), p(i, 1), static_cast<std::size_t>(i) < lab.size() ? lab[static_cast<std::size_t>(i)] : -1,
                              sets[s].domain, std::string(route_name(route))});
      }
    }
  }
  return table;
}

}  // namespace dafr2
