#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <tuple>

#include "dafr2/analysis/features2d.hpp"
#include "dafr2/analysis/frechet.hpp"
#include "dafr2/analysis/lipschitz.hpp"
#include "dafr2/analysis/mine.hpp"
#include "dafr2/analysis/scatter.hpp"
#include "dafr2/cli/flat_config.hpp"
#include "dafr2/core/metrics.hpp"
#include "dafr2/corruptions/corruption.hpp"
#include "dafr2/datasets/idx.hpp"
#include "dafr2/datasets/storage.hpp"
#include "dafr2/datasets/synth_shapes.hpp"
#include "dafr2/nn/checkpoint.hpp"
#include "dafr2/trainer/trainer.hpp"

namespace dafr2::cli {

/// Every key the experiment understands, with its default. Resolving a config
/// starts from this table, so the echoed copy is always complete.
inline const FlatMap& default_flat() {
  static const FlatMap defaults = [] {
    const TrainConfig t;
    const MineConfig mine;
    auto str = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    std::string widths;
    for (auto w : t.architecture.widths) widths += (widths.empty() ? "" : ",") + std::to_string(w);
    return FlatMap{
        {"experiment.name", "dafr2"},
        {"seed", "0"},
        {"output.dir", ""},
        {"dataset.kind", "synthetic"},
        {"dataset.path", ""},
        {"dataset.image_size", "16"},
        {"dataset.n_train", "2000"},
        {"dataset.n_target", "2000"},
        {"dataset.n_test", "2000"},
        {"dataset.target_fraction", "0.5"},
        {"dataset.max_train", "0"},
        {"corruptions", "gaussian_noise:3"},
        {"trainer.epochs", std::to_string(t.epochs)},
        {"trainer.batch_size", std::to_string(t.batch_size)},
        {"trainer.source_opt.kind", t.source_opt.kind},
        {"trainer.source_opt.lr", str(t.source_opt.lr)},
        {"trainer.source_opt.weight_decay", str(t.source_opt.weight_decay)},
        {"trainer.source_opt.momentum", str(t.source_opt.momentum)},
        {"trainer.target_opt.kind", t.target_opt.kind},
        {"trainer.target_opt.lr", str(t.target_opt.lr)},
        {"trainer.target_opt.weight_decay", str(t.target_opt.weight_decay)},
        {"trainer.schedule.kind", t.schedule.kind},
        {"trainer.schedule.t_max", std::to_string(t.schedule.t_max)},
        {"trainer.schedule.eta_min", str(t.schedule.eta_min)},
        {"trainer.augmentation.crop_pad", std::to_string(t.augmentation.crop_pad)},
        {"trainer.augmentation.hflip_p", str(t.augmentation.hflip_p)},
        {"trainer.architecture.widths", widths},
        {"trainer.architecture.blocks_per_stage", std::to_string(t.architecture.blocks_per_stage)},
        {"trainer.architecture.embedding_dim", std::to_string(t.architecture.embedding_dim)},
        {"trainer.architecture.bn_momentum", str(t.architecture.bn_momentum)},
        {"trainer.architecture.bn_eps", str(t.architecture.bn_eps)},
        {"trainer.target_init", "random"},
        {"trainer.extra_bn_passes", std::to_string(t.extra_bn_passes)},
        {"analysis.mi", "true"},
        {"analysis.fd", "true"},
        {"analysis.llc", "true"},
        {"analysis.scatter", "true"},
        {"analysis.features2d", "true"},
        {"analysis.samples", "2000"},
        {"analysis.mi.steps", std::to_string(mine.steps)},
        {"analysis.mi.batch", std::to_string(mine.batch)},
        {"analysis.mi.lr", str(mine.lr)},
        {"analysis.mi.hidden_width", std::to_string(mine.hidden_width)},
        {"analysis.mi.ema_decay", str(mine.ema_decay)},
        {"analysis.llc.samples", "20000"},
        {"analysis.llc.paper_scale", "false"},
        {"analysis.features2d.points", "500"},
    };
  }();
  return defaults;
}

struct CorruptionEntry {
  CorruptionKind kind;
  int severity;

  std::string label() const { return std::string(kind_name(kind)) + "_s" + std::to_string(severity); }
  /// stream 0xc1 corrupts the target pool, 0xc2 the test set
  std::uint64_t seed(std::uint64_t run_seed, std::uint64_t stream) const {
    return derive_seed(run_seed, {stream, static_cast<std::uint64_t>(kind) * 16 + static_cast<std::uint64_t>(severity)});
  }
};

struct ExperimentConfig {
  std::string name = "dafr2";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  std::string dataset_kind = "synthetic";  // synthetic | native | mnist
  std::filesystem::path dataset_path;
  std::size_t image_size = 16, n_train = 2000, n_target = 2000, n_test = 2000, max_train = 0;
  double target_fraction = 0.5;

  std::vector<CorruptionEntry> corruptions;
  TrainConfig train;

  bool mi = true, fd = true, llc = true, scatter = true, features2d = true;
  std::size_t analysis_samples = 2000;
  MineConfig mine;
  std::size_t llc_samples = 20000;
  std::size_t features2d_points = 500;

  FlatMap resolved;  // the flat form this was built from
};

inline std::vector<CorruptionEntry> parse_corruption_list(const FlatReader& r, const std::string& key) {
  std::vector<CorruptionEntry> out;
  for (const auto& item : r.list(key)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key + ": '" + item + "' should be kind:severity");
    CorruptionEntry e{};
    try {
      e.kind = parse_kind(item.substr(0, colon));
    } catch (const Error& ex) {
      throw ConfigError(key + ": " + ex.what());
    }
    e.severity = FlatReader::parse_number<int>(key, item.substr(colon + 1));
    if (e.severity < 1 || e.severity > 5) throw ConfigError(key + ": severity must be 1..5 in '" + item + "'");
    if (!kind_implemented(e.kind)) throw ConfigError(key + ": corruption '" + item.substr(0, colon) + "' is not implemented");
    out.push_back(e);
  }
  return out;
}

inline std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("DAFR2_OUT"); env && *env) return env;
  return "runs";
}

/// Defaults, then the file, then --set overrides; unknown keys are errors.
inline ExperimentConfig resolve_config(const FlatMap& file_entries, const std::vector<std::string>& overrides = {}) {
  FlatMap m = default_flat();
  auto put = [&m](const std::string& k, const std::string& v) {
    if (!m.count(k)) throw ConfigError("unknown config key '" + k + "'");
    m[k] = v;
  };
  for (const auto& [k, v] : file_entries) put(k, v);
  for (const auto& o : overrides) {
    const auto [k, v] = parse_assignment(o);
    put(k, v);
  }

  const FlatReader r(m);
  ExperimentConfig c;
  c.name = r.str("experiment.name");
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("experiment.name must be a non-empty plain name");
  c.seed = r.u64("seed");
  if (m["output.dir"].empty()) m["output.dir"] = (default_output_root() / c.name).string();
  c.output_dir = m["output.dir"];

  c.dataset_kind = r.str("dataset.kind");
  if (c.dataset_kind != "synthetic" && c.dataset_kind != "native" && c.dataset_kind != "mnist")
    throw ConfigError("dataset.kind must be synthetic, native or mnist");
  c.dataset_path = r.str("dataset.path");
  if (c.dataset_kind != "synthetic" && c.dataset_path.empty()) throw ConfigError("dataset.path is required for dataset.kind=" + c.dataset_kind);
  c.image_size = r.count("dataset.image_size");
  c.n_train = r.count("dataset.n_train");
  c.n_target = r.count("dataset.n_target");
  c.n_test = r.count("dataset.n_test");
  c.max_train = r.count("dataset.max_train");
  c.target_fraction = r.real("dataset.target_fraction");
  if (!(c.target_fraction > 0 && c.target_fraction < 1)) throw ConfigError("dataset.target_fraction must be in (0,1)");
  c.corruptions = parse_corruption_list(r, "corruptions");

  auto& t = c.train;
  t.seed = c.seed;
  t.epochs = r.count("trainer.epochs");
  t.batch_size = r.count("trainer.batch_size");
  t.source_opt = {r.str("trainer.source_opt.kind"), r.real("trainer.source_opt.lr"), r.real("trainer.source_opt.weight_decay"),
                  r.real("trainer.source_opt.momentum")};
  t.target_opt = {r.str("trainer.target_opt.kind"), r.real("trainer.target_opt.lr"), r.real("trainer.target_opt.weight_decay"), 0.0};
  t.schedule = {r.str("trainer.schedule.kind"), r.count("trainer.schedule.t_max"), r.real("trainer.schedule.eta_min")};
  t.augmentation = {r.count("trainer.augmentation.crop_pad"), r.real("trainer.augmentation.hflip_p")};
  t.architecture.widths = r.counts("trainer.architecture.widths");
  if (t.architecture.widths.empty()) throw ConfigError("trainer.architecture.widths must list at least one width");
  t.architecture.blocks_per_stage = r.count("trainer.architecture.blocks_per_stage");
  t.architecture.embedding_dim = r.count("trainer.architecture.embedding_dim");
  t.architecture.bn_momentum = r.real("trainer.architecture.bn_momentum");
  t.architecture.bn_eps = r.real("trainer.architecture.bn_eps");
  const auto& init = r.str("trainer.target_init");
  if (init != "random" && init != "copy") throw ConfigError("trainer.target_init must be random or copy");
  t.target_init = init == "copy" ? TargetInit::copy : TargetInit::random;
  t.extra_bn_passes = r.count("trainer.extra_bn_passes");
  t.validate();

  c.mi = r.flag("analysis.mi");
  c.fd = r.flag("analysis.fd");
  c.llc = r.flag("analysis.llc");
  c.scatter = r.flag("analysis.scatter");
  c.features2d = r.flag("analysis.features2d");
  c.analysis_samples = r.count("analysis.samples");
  c.mine.steps = r.count("analysis.mi.steps");
  c.mine.batch = r.count("analysis.mi.batch");
  c.mine.lr = r.real("analysis.mi.lr");
  c.mine.hidden_width = r.count("analysis.mi.hidden_width");
  c.mine.ema_decay = r.real("analysis.mi.ema_decay");
  try {
    c.mine.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("analysis.") + e.what());
  }
  c.llc_samples = r.flag("analysis.llc.paper_scale") ? 200000 : r.count("analysis.llc.samples");
  if (c.llc_samples == 0) throw ConfigError("analysis.llc.samples must be positive");
  c.features2d_points = r.count("analysis.features2d.points");
  c.resolved = std::move(m);
  return c;
}

inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  return resolve_config(file ? read_flat(*file) : FlatMap{}, overrides);
}

// ------------------------------------------------------------------- data

struct ExperimentData {
  LabeledDataset train;        // labelled source domain
  LabeledDataset target_pool;  // images that get corrupted into the target domain; labels unused in training
  LabeledDataset test;         // clean held-out source test set
};

namespace detail {

inline std::filesystem::path first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (std::filesystem::exists(dir / n)) return dir / n;
  throw ConfigError("dataset file " + std::string(*names.begin()) + " not found in " + dir.string());
}

inline LabeledDataset load_mnist_split(const std::filesystem::path& dir, const char* prefix) {
  const std::string p(prefix);
  const auto images = first_existing(dir, {(p + "-images-idx3-ubyte").c_str(), (p + "-images.idx3-ubyte").c_str(),
                                           (p + "-images-idx3-ubyte.gz").c_str()});
  const auto labels = first_existing(dir, {(p + "-labels-idx1-ubyte").c_str(), (p + "-labels.idx1-ubyte").c_str(),
                                           (p + "-labels-idx1-ubyte.gz").c_str()});
  return std::get<LabeledDataset>(load_idx(images, labels));
}

inline LabeledDataset head(const LabeledDataset& ds, std::size_t n) {
  if (n == 0 || n >= ds.size()) return ds;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return subset(ds, idx);
}

}  // namespace detail

/// Checks that the configured dataset can be found, without loading it.
inline void check_dataset_available(const ExperimentConfig& c) {
  if (c.dataset_kind == "synthetic") return;
  if (!std::filesystem::is_directory(c.dataset_path)) throw ConfigError("dataset.path '" + c.dataset_path.string() + "' does not exist");
  if (c.dataset_kind == "native")
    for (const char* sub : {"train", "test"})
      if (!std::filesystem::is_directory(c.dataset_path / sub))
        throw ConfigError("dataset.path must contain train/ and test/ dataset directories; missing " + std::string(sub));
}

/// Synthetic data is drawn from streams of `seed`; file-backed data is split
/// into a labelled source part and a target pool with the same seed.
inline ExperimentData load_experiment_data(const ExperimentConfig& c, std::uint64_t seed) {
  check_dataset_available(c);
  ExperimentData d;
  if (c.dataset_kind == "synthetic") {
    d.train = synth_shapes(c.n_train, derive_seed(seed, {0xd1ULL}), c.image_size);
    d.target_pool = synth_shapes(c.n_target, derive_seed(seed, {0xd2ULL}), c.image_size);
    d.test = synth_shapes(c.n_test, derive_seed(seed, {0xd3ULL}), c.image_size);
  } else {
    LabeledDataset train, test;
    if (c.dataset_kind == "native") {
      train = load_labeled_dataset(c.dataset_path / "train");
      test = load_labeled_dataset(c.dataset_path / "test");
    } else {
      train = detail::load_mnist_split(c.dataset_path, "train");
      test = detail::load_mnist_split(c.dataset_path, "t10k");
    }
    auto parts = split(train, {1.0 - c.target_fraction, c.target_fraction}, derive_seed(seed, {0xd4ULL}));
    d.train = detail::head(parts[0], c.max_train);
    d.target_pool = detail::head(parts[1], c.max_train);
    d.test = test;
  }
  d.train.normalization = compute_normalization(d.train.images);
  d.test.normalization = d.train.normalization;
  d.test.num_classes = std::max(d.test.num_classes, d.train.num_classes);
  return d;
}

// ------------------------------------------------------------ experiment

struct RunStatus {
  int exit_code = 0;
  std::string message;
};

namespace detail {

inline LabeledDataset first_n(const LabeledDataset& ds, std::size_t n) { return head(ds, n); }

inline std::vector<double> as_doubles(const Eigen::MatrixXd& m, Eigen::Index col) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, col);
  return v;
}

struct RecordSink {
  MetricsLog& log;
  std::string run_id;
  std::map<std::string, std::string> base_tags;

  void scalar(const std::string& name, double v, std::map<std::string, std::string> tags = {}) { vector(name, {v}, std::move(tags)); }
  void vector(const std::string& name, std::vector<double> v, std::map<std::string, std::string> tags = {}) {
    for (const auto& [k, val] : base_tags) tags.try_emplace(k, val);
    log.append(MetricRecord{name, std::move(v), std::move(tags), utc_timestamp(), run_id});
  }
  void eval(const EvalResult& r, std::map<std::string, std::string> tags) {
    for (const auto& [k, val] : base_tags) tags.try_emplace(k, val);
    log.append(r.records(run_id, std::move(tags)));
  }
};

}  // namespace detail

/// Analyses of one adapted model against the baseline on a corrupted test set.
inline void run_analyses(const ExperimentConfig& c, Bundle& baseline, Bundle& adapted, const LabeledDataset& clean,
                         const LabeledDataset& corrupted, detail::RecordSink& sink, std::map<std::string, std::string> tags,
                         std::uint64_t seed, std::ostream& log) {
  const auto a_clean = detail::first_n(clean, c.analysis_samples), a_corr = detail::first_n(corrupted, c.analysis_samples);
  for (Route route : {Route::baseline, Route::adapted}) {
    auto rt = tags;
    rt["route"] = std::string(route_name(route));
    const auto view = route_view(baseline, adapted, route);
    if (c.mi || c.fd) {
      const auto ec = embed_matrix(view, a_clean.images), ez = embed_matrix(view, a_corr.images);
      if (c.fd) sink.scalar("fd", frechet_distance(ec, ez), rt);
      if (c.mi) {
        auto mc = c.mine;
        mc.seed = derive_seed(seed, {0x313ULL});
        sink.scalar("mi", estimate_mi(ec, ez, mc), rt);
      }
    }
    if (c.llc) {
      const auto r = local_lipschitz(classifier_probe(view), c.llc_samples,
                                     view_input_shape(view, clean.height(), clean.width()), derive_seed(seed, {0x11cULL}));
      sink.scalar("llc", r.value, rt);
    }
  }
  if (c.scatter) {
    for (auto kind : {ScatterKind::ce_loss, ScatterKind::nn_feature_distance}) {
      const auto rep = scatter_report(adapted, baseline, a_corr, kind);
      auto kt = tags;
      kt["kind"] = std::string(scatter_kind_name(kind));
      std::vector<double> bv, av, corrected;
      for (const auto& row : rep.rows) {
        if (row.flagged) continue;
        bv.push_back(row.baseline_value);
        av.push_back(row.adapted_value);
        corrected.push_back(row.corrected ? 1.0 : 0.0);
      }
      for (auto [route, vals, med] : {std::tuple{"baseline", &bv, rep.median_baseline()}, std::tuple{"adapted", &av, rep.median_adapted()}}) {
        auto rt = kt;
        rt["route"] = route;
        sink.scalar("scatter_median", med, rt);
        sink.vector("scatter_values", *vals, rt);
      }
      sink.vector("scatter_corrected", corrected, kt);
      sink.scalar("scatter_flagged", static_cast<double>(rep.rows.size() - bv.size()), kt);
    }
  }
  if (c.features2d) {
    const auto f_clean = detail::first_n(clean, c.features2d_points), f_corr = detail::first_n(corrupted, c.features2d_points);
    ProbeConfig pc;
    pc.seed = derive_seed(seed, {0x2dULL});
    const auto table = export_features_2d(baseline, adapted, {{"source", &f_clean}, {"target", &f_corr}}, pc);
    for (const char* route : {"baseline", "adapted"})
      for (const char* domain : {"source", "target"}) {
        auto ft = tags;
        ft["route"] = route;
        ft["domain"] = domain;
        ft["projection"] = std::string(projection_name(table.projection));
        const auto pts = table.points(domain, route);
        sink.vector("features2d_x", detail::as_doubles(pts, 0), ft);
        sink.vector("features2d_y", detail::as_doubles(pts, 1), ft);
        std::vector<double> labels;
        for (const auto& r : table.rows)
          if (r.route == route && r.domain == domain) labels.push_back(static_cast<double>(r.label));
        sink.vector("features2d_label", labels, ft);
      }
    for (const char* route : {"baseline", "adapted"}) {
      auto et = tags;
      et["route"] = route;
      sink.scalar("energy_coefficient", energy_coefficient(table.points("source", route), table.points("target", route)), et);
    }
  }
  log << "    analyses done\n";
}

/// Baseline training, corruption generation, DAFR2 training per corruption,
/// evaluation and analyses, for each seed in turn. Artifacts go to
/// c.output_dir; a FAILED marker is left behind when a stage throws.
inline RunStatus run_experiment(const ExperimentConfig& c, std::size_t seeds = 1, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  if (seeds == 0) return {2, "--seeds must be >= 1"};
  try {
    check_dataset_available(c);
  } catch (const ConfigError& e) {
    return {2, e.what()};
  }
  fs::create_directories(c.output_dir);
  fs::remove(c.output_dir / "FAILED");
  fs::remove(c.output_dir / "metrics.jsonl");
  {
    std::ofstream out(c.output_dir / "config.resolved");
    out << render_flat(c.resolved);
  }
  MetricsLog metrics(c.output_dir / "metrics.jsonl");

  std::string stage = "setup";
  auto fail = [&](int code, const std::string& what) {
    std::ofstream marker(c.output_dir / "FAILED");
    marker << "stage: " << stage << "\nerror: " << what << "\n";
    return RunStatus{code, stage + ": " + what};
  };

  try {
    for (std::size_t s = 0; s < seeds; ++s) {
      const std::uint64_t seed = c.seed + s;
      const fs::path seed_dir = c.output_dir / ("seed" + std::to_string(seed));
      detail::RecordSink sink{metrics, c.name + "/seed" + std::to_string(seed), {{"seed", std::to_string(seed)}}};
      log << "seed " << seed << "\n";

      stage = "data";
      const auto data = load_experiment_data(c, seed);
      TrainConfig tc = c.train;
      tc.seed = seed;
      tc.architecture.in_channels = data.train.channels();

      stage = "train-baseline";
      log << "  baseline\n";
      tc.checkpoint_dir = seed_dir / "baseline";
      auto base = train_baseline(data.train, tc);
      std::vector<double> ce;
      for (const auto& e : base.epochs) ce.push_back(e.mean_l_ce);
      sink.vector("epoch_l_ce", ce, {{"route", "baseline"}, {"corruption", "none"}, {"severity", "0"}});

      stage = "evaluate-baseline";
      sink.eval(evaluate(base.bundle, data.test, Route::baseline), {{"corruption", "none"}, {"severity", "0"}, {"eval", "clean"}});
      if (c.llc && c.corruptions.empty()) {
        const auto v = view_of(base.bundle, Route::baseline);
        sink.scalar("llc", local_lipschitz(classifier_probe(v), c.llc_samples, view_input_shape(v, data.test.height(), data.test.width()),
                                           derive_seed(seed, {0x11cULL})).value,
                    {{"route", "baseline"}, {"corruption", "none"}, {"severity", "0"}});
      }

      for (const auto& corr : c.corruptions) {
        const std::map<std::string, std::string> ctags{{"corruption", std::string(kind_name(corr.kind))}, {"severity", std::to_string(corr.severity)}};
        log << "  " << corr.label() << "\n";
        stage = "corrupt " + corr.label();
        const auto target = corrupt(data.target_pool, {corr.kind, corr.severity, corr.seed(seed, 0xc1)});
        const auto test_c = with_reference_labels(corrupt(data.test, {corr.kind, corr.severity, corr.seed(seed, 0xc2)}),
                                                  data.train.normalization);

        stage = "train-dafr2 " + corr.label();
        tc.checkpoint_dir = seed_dir / corr.label();
        auto ad = train_dafr2(data.train, target, tc);
        std::vector<double> reg;
        for (const auto& e : ad.epochs) reg.push_back(e.mean_l_regression);
        auto rtags = ctags;
        rtags["route"] = "adapted";
        sink.vector("epoch_l_regression", reg, rtags);

        stage = "evaluate " + corr.label();
        auto eval_tags = [&](const char* which) {
          auto t = ctags;
          t["eval"] = which;
          return t;
        };
        sink.eval(evaluate(base.bundle, test_c, Route::baseline), eval_tags("corrupted"));
        sink.eval(evaluate(ad.bundle, test_c, Route::adapted), eval_tags("corrupted"));
        sink.eval(evaluate(ad.bundle, data.test, Route::adapted), eval_tags("clean"));

        if (c.mi || c.fd || c.llc || c.scatter || c.features2d) {
          stage = "analyze " + corr.label();
          run_analyses(c, base.bundle, ad.bundle, data.test, test_c, sink, ctags, seed, log);
        }
      }
    }
  } catch (const ConfigError& e) {
    return fail(2, e.what());
  } catch (const DivergenceError& e) {
    return fail(3, e.what());
  } catch (const std::exception& e) {
    return fail(4, e.what());
  }
  return {0, "ok"};
}

}  // namespace dafr2::cli
