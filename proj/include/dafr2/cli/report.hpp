#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dafr2/cli/svg.hpp"
#include "dafr2/core/metrics.hpp"

namespace dafr2::cli {

struct SummaryRow {
  std::string metric;
  std::map<std::string, std::string> tags;  // without seed
  double mean = 0.0;
  double stddev = 0.0;  // sample std; 0 for a single seed
  std::size_t n = 0;
};

struct ReportResult {
  std::vector<SummaryRow> rows;
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::vector<std::filesystem::path> files;
};

namespace detail {

inline std::string tags_string(const std::map<std::string, std::string>& tags) {
  std::string s;
  for (const auto& [k, v] : tags) s += (s.empty() ? "" : " ") + k + "=" + v;
  return s;
}

inline std::string fmt(double v, int digits = 4) {
  if (!std::isfinite(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline SummaryRow summarize(const std::string& metric, const std::map<std::string, std::string>& tags, const std::vector<double>& xs) {
  SummaryRow r{metric, tags, 0.0, 0.0, xs.size()};
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

inline std::map<std::string, std::string> without(std::map<std::string, std::string> tags, std::initializer_list<const char*> keys) {
  for (const char* k : keys) tags.erase(k);
  return tags;
}

inline const std::string& tag(const MetricRecord& r, const std::string& k) {
  static const std::string empty;
  const auto it = r.tags.find(k);
  return it == r.tags.end() ? empty : it->second;
}

inline std::string corruption_label(const MetricRecord& r) { return tag(r, "corruption") + "_s" + tag(r, "severity"); }

}  // namespace detail

/// Aggregates scalar metrics over seeds. Rows are ordered by metric then tags.
inline std::vector<SummaryRow> summarize_records(const std::vector<MetricRecord>& records) {
  std::map<std::pair<std::string, std::map<std::string, std::string>>, std::vector<double>> groups;
  // per-seed accuracy gain of the adapted route on corrupted data
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> acc;  // (corruption label, seed) -> route -> acc
  for (const auto& r : records) {
    if (r.value.size() != 1) continue;
    groups[{r.name, detail::without(r.tags, {"seed"})}].push_back(r.value.front());
    if (r.name == "accuracy" && detail::tag(r, "eval") == "corrupted")
      acc[{detail::corruption_label(r), detail::tag(r, "seed")}][detail::tag(r, "route")] = r.value.front();
  }
  for (const auto& [key, routes] : acc) {
    if (!routes.count("baseline") || !routes.count("adapted")) continue;
    const auto sep = key.first.rfind("_s");
    groups[{"accuracy_gain", {{"corruption", key.first.substr(0, sep)}, {"severity", key.first.substr(sep + 2)}, {"eval", "corrupted"}}}].push_back(
        routes.at("adapted") - routes.at("baseline"));
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, xs] : groups) rows.push_back(detail::summarize(key.first, key.second, xs));
  return rows;
}

inline std::string summary_markdown(const std::vector<SummaryRow>& rows, std::size_t skipped) {
  std::ostringstream out;
  out << "# Run summary\n\n";
  if (skipped) out << "Skipped " << skipped << " unreadable metric line(s).\n\n";
  out << "| metric | tags | mean | std | n |\n|---|---|---|---|---|\n";
  for (const auto& r : rows)
    out << "| " << r.metric << " | " << detail::tags_string(r.tags) << " | " << detail::fmt(r.mean) << " | " << detail::fmt(r.stddev) << " | " << r.n
        << " |\n";
  return out.str();
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "metric,tags,mean,std,n\n";
  for (const auto& r : rows) out << r.metric << ",\"" << detail::tags_string(r.tags) << "\"," << detail::fmt(r.mean, 6) << "," << detail::fmt(r.stddev, 6) << "," << r.n << "\n";
  return out.str();
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + p.string());
  out << s;
}

inline const SummaryRow* find_row(const std::vector<SummaryRow>& rows, const std::string& metric, const std::map<std::string, std::string>& tags) {
  for (const auto& r : rows)
    if (r.metric == metric && r.tags == tags) return &r;
  return nullptr;
}

inline std::string accuracy_chart(const std::vector<SummaryRow>& rows) {
  std::set<std::pair<std::string, std::string>> corruptions;
  for (const auto& r : rows)
    if (r.metric == "accuracy" && r.tags.at("corruption") != "none") corruptions.insert({r.tags.at("corruption"), r.tags.at("severity")});
  std::vector<std::string> cats{"clean"};
  svg::Series base{"baseline", "#4c72b0", {}, {}}, adapted{"adapted", "#dd8452", {}, {}};
  auto value = [&](const std::map<std::string, std::string>& t) {
    const auto* r = find_row(rows, "accuracy", t);
    return r ? r->mean : std::nan("");
  };
  base.y.push_back(value({{"corruption", "none"}, {"severity", "0"}, {"eval", "clean"}, {"route", "baseline"}}));
  double clean_adapted = 0.0;
  std::size_t k = 0;
  for (const auto& [c, s] : corruptions)
    if (const double v = value({{"corruption", c}, {"severity", s}, {"eval", "clean"}, {"route", "adapted"}}); std::isfinite(v)) {
      clean_adapted += v;
      ++k;
    }
  adapted.y.push_back(k ? clean_adapted / static_cast<double>(k) : std::nan(""));
  for (const auto& [c, s] : corruptions) {
    cats.push_back(c + " s" + s);
    base.y.push_back(value({{"corruption", c}, {"severity", s}, {"eval", "corrupted"}, {"route", "baseline"}}));
    adapted.y.push_back(value({{"corruption", c}, {"severity", s}, {"eval", "corrupted"}, {"route", "adapted"}}));
  }
  return svg::bar_chart("Test accuracy (mean over seeds)", cats, {base, adapted}, "accuracy");
}

struct VectorKey {
  std::string name, corruption, kind, route, domain;
  auto operator<=>(const VectorKey&) const = default;
};

}  // namespace detail

/// Reads <run_dir>/metrics.jsonl and writes report/summary.{md,csv} plus SVG
/// figures. Output depends only on the log, so repeated calls are identical.
inline ReportResult write_report(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  const auto log = read_metrics(run_dir / "metrics.jsonl");
  ReportResult res;
  res.records = log.records.size();
  res.skipped = log.skipped;
  res.rows = summarize_records(log.records);
  const fs::path out = run_dir / "report";
  fs::create_directories(out);
  auto emit = [&](const std::string& name, const std::string& text) {
    detail::write_text(out / name, text);
    res.files.push_back(out / name);
  };
  emit("summary.md", summary_markdown(res.rows, res.skipped));
  emit("summary.csv", summary_csv(res.rows));
  emit("accuracy.svg", detail::accuracy_chart(res.rows));

  // vectors pooled over seeds, in log order
  std::map<detail::VectorKey, std::vector<double>> vecs;
  for (const auto& r : log.records) {
    if (r.name.rfind("scatter_", 0) != 0 && r.name.rfind("features2d_", 0) != 0) continue;
    if (r.name == "scatter_median" || r.name == "scatter_flagged") continue;
    auto& v = vecs[{r.name, detail::corruption_label(r), detail::tag(r, "kind"), detail::tag(r, "route"), detail::tag(r, "domain")}];
    v.insert(v.end(), r.value.begin(), r.value.end());
  }
  std::set<std::pair<std::string, std::string>> scatter_groups;
  std::set<std::string> feature_groups;
  for (const auto& [k, v] : vecs) {
    if (k.name == "scatter_values") scatter_groups.insert({k.corruption, k.kind});
    if (k.name == "features2d_x") feature_groups.insert(k.corruption);
  }
  for (const auto& [corr, kind] : scatter_groups) {
    const auto& x = vecs[{"scatter_values", corr, kind, "baseline", ""}];
    const auto& y = vecs[{"scatter_values", corr, kind, "adapted", ""}];
    const auto& flag = vecs[{"scatter_corrected", corr, kind, "", ""}];
    svg::Series fixed{"corrected by adaptation", "#c44e52", {}, {}}, other{"other samples", "#4c72b0", {}, {}};
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
      auto& s = i < flag.size() && flag[i] > 0.5 ? fixed : other;
      s.x.push_back(x[i]);
      s.y.push_back(y[i]);
    }
    const std::string axis = kind == "ce_loss" ? "CE loss" : "NN feature distance";
    emit("scatter_" + kind + "_" + corr + ".svg", svg::scatter_plot(axis + " per test sample, " + corr, {other, fixed}, axis));
  }
  static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};
  for (const auto& corr : feature_groups) {
    std::vector<std::pair<std::string, std::vector<svg::Series>>> panels;
    for (const char* route : {"baseline", "adapted"})
      for (const char* domain : {"source", "target"}) {
        const auto& xs = vecs[{"features2d_x", corr, "", route, domain}];
        const auto& ys = vecs[{"features2d_y", corr, "", route, domain}];
        const auto& ls = vecs[{"features2d_label", corr, "", route, domain}];
        std::map<long, svg::Series> by_label;
        for (std::size_t i = 0; i < xs.size() && i < ys.size() && i < ls.size(); ++i) {
          const long l = std::lround(ls[i]);
          auto& s = by_label[l];
          if (s.label.empty()) s = {"class " + std::to_string(l), palette[static_cast<std::size_t>(std::abs(l)) % 10], {}, {}};
          s.x.push_back(xs[i]);
          s.y.push_back(ys[i]);
        }
        std::vector<svg::Series> series;
        for (auto& [l, s] : by_label) series.push_back(std::move(s));
        panels.push_back({std::string(route) + " / " + domain, std::move(series)});
      }
    emit("features2d_" + corr + ".svg", svg::cloud_panels("2-D embeddings, " + corr, panels));
  }
  return res;
}

}  // namespace dafr2::cli
