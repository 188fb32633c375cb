#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dafr2/analysis/views.hpp"

namespace dafr2 {

enum class ScatterKind { ce_loss, nn_feature_distance };

inline std::string_view scatter_kind_name(ScatterKind k) { return k == ScatterKind::ce_loss ? "ce_loss" : "nn_feature_distance"; }

inline ScatterKind parse_scatter_kind(std::string_view s) {
  if (s == "ce_loss") return ScatterKind::ce_loss;
  if (s == "nn_feature_distance") return ScatterKind::nn_feature_distance;
  throw ParameterError("unknown scatter kind '" + std::string(s) + "'");
}

struct ScatterRow {
  std::size_t index = 0;
  double baseline_value = 0.0;
  double adapted_value = 0.0;
  bool baseline_correct = false;
  bool adapted_correct = false;
  bool corrected = false;  // wrong under baseline, right after adaptation
  bool flagged = false;    // value undefined (singleton class); values are NaN
};

struct ScatterReport {
  ScatterKind kind = ScatterKind::ce_loss;
  std::vector<ScatterRow> rows;

  std::vector<double> values(bool adapted) const {
    std::vector<double> v;
    for (const auto& r : rows)
      if (!r.flagged) v.push_back(adapted ? r.adapted_value : r.baseline_value);
    return v;
  }
  double median_baseline() const { return median(values(false)); }
  double median_adapted() const { return median(values(true)); }
  /// Share of defined rows strictly below the 45-degree line.
  double fraction_below_diagonal() const {
    std::size_t below = 0, defined = 0;
    for (const auto& r : rows) {
      if (r.flagged) continue;
      ++defined;
      below += r.adapted_value < r.baseline_value;
    }
    return defined ? static_cast<double>(below) / static_cast<double>(defined) : 0.0;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(9);
    out << "index,baseline_value,adapted_value,baseline_correct,adapted_correct,corrected,flagged\n";
    for (const auto& r : rows)
      out << r.index << ',' << r.baseline_value << ',' << r.adapted_value << ',' << r.baseline_correct << ',' << r.adapted_correct << ','
          << r.corrected << ',' << r.flagged << '\n';
    return out.str();
  }

  static double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
  }
};

namespace detail {

/// Distance from each row to its nearest other row with the same label, NaN
/// for singleton classes. Ties resolve to the lowest index, which only
/// matters to callers asking for the neighbour itself.
inline std::vector<double> nearest_same_class(const Tensor<float>& e, std::span<const std::int64_t> labels,
                                              std::vector<std::size_t>* neighbour = nullptr) {
  const std::size_t m = e.dim(0), d = e.dim(1);
  std::vector<double> dist(m, std::numeric_limits<double>::quiet_NaN());
  if (neighbour) neighbour->assign(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(e[i * d + k]) - static_cast<double>(e[j * d + k]);
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        arg = j;
      }
    }
    if (arg < m) {
      dist[i] = std::sqrt(best);
      if (neighbour) (*neighbour)[i] = arg;
    }
  }
  return dist;
}

}  // namespace detail

/// Per-sample comparison of two models on one labelled (usually corrupted)
/// set. ce_loss keeps the samples the adapted model gets right;
/// nn_feature_distance keeps the samples the baseline gets wrong, measuring
/// the distance to the nearest same-class embedding within the set.
inline ScatterReport scatter_report(const ModelView& baseline, const ModelView& adapted, const LabeledDataset& ds, ScatterKind kind) {
  if (ds.labels.size() != ds.size()) throw ParameterError("scatter: dataset has no labels");
  const auto eb = baseline.embed(ds.images), ea = adapted.embed(ds.images);
  const auto lb = baseline.g->forward(eb), la = adapted.g->forward(ea);
  const auto pb = nn::argmax_rows(lb), pa = nn::argmax_rows(la);

  std::vector<double> vb, va;
  if (kind == ScatterKind::ce_loss) {
    vb = nn::cross_entropy(lb, ds.labels).per_sample;
    va = nn::cross_entropy(la, ds.labels).per_sample;
  } else {
    vb = detail::nearest_same_class(eb, ds.labels);
    va = detail::nearest_same_class(ea, ds.labels);
  }

  ScatterReport rep;
  rep.kind = kind;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ScatterRow r;
    r.index = i;
    r.baseline_correct = pb[i] == ds.labels[i];
    r.adapted_correct = pa[i] == ds.labels[i];
    r.corrected = !r.baseline_correct && r.adapted_correct;
    const bool keep = kind == ScatterKind::ce_loss ? r.adapted_correct : !r.baseline_correct;
    if (!keep) continue;
    r.baseline_value = vb[i];
    r.adapted_value = va[i];
    r.flagged = std::isnan(vb[i]) || std::isnan(va[i]);
    rep.rows.push_back(r);
  }
  return rep;
}

inline ScatterReport scatter_report(Bundle& adapted, Bundle& baseline, const LabeledDataset& ds, ScatterKind kind) {
  return scatter_report(route_view(baseline, adapted, Route::baseline), route_view(baseline, adapted, Route::adapted), ds, kind);
}

}  // namespace dafr2
