#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "dafr2/cli/experiment.hpp"
#include "dafr2/cli/report.hpp"
#include "dafr2/oracles/oracles.hpp"

using namespace dafr2;
using namespace dafr2::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "flat key = value config file");
    app->add_option("--set", overrides, "override, key=value (repeatable)");
  }
  ExperimentConfig load() const { return load_config(file.empty() ? std::nullopt : std::optional<fs::path>(file), overrides); }
};

Route parse_route(const std::string& s) {
  if (s == "baseline") return Route::baseline;
  if (s == "adapted") return Route::adapted;
  throw ConfigError("route must be baseline or adapted, got '" + s + "'");
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw ParameterError("cannot write " + out);
  f << text;
}

void print_epochs(const TrainResult& r) {
  for (const auto& e : r.epochs)
    std::cerr << "epoch " << e.epoch << " l_ce " << e.mean_l_ce << " l_reg " << e.mean_l_regression << " lr_s " << e.source_lr << "\n";
}

TrainConfig train_config_for(const ExperimentConfig& c, const LabeledDataset& source, const std::string& out) {
  TrainConfig tc = c.train;
  tc.architecture.in_channels = source.channels();
  tc.checkpoint_dir = out;
  return tc;
}

LabeledDataset source_data(const ExperimentConfig& c, const std::string& dir) {
  if (dir.empty()) return load_experiment_data(c, c.seed).train;
  auto ds = load_labeled_dataset(dir);
  if (ds.normalization.empty()) ds.normalization = compute_normalization(ds.images);
  return ds;
}

// key=value arguments of the oracle subcommand
FlatMap oracle_args(const std::vector<std::string>& kv) {
  FlatMap m;
  for (const auto& s : kv) {
    auto [k, v] = parse_assignment(s);
    m[k] = v;
  }
  return m;
}

Eigen::VectorXd vec_arg(const FlatReader& r, const std::string& key) {
  const auto items = r.list(key);
  Eigen::VectorXd v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) v(static_cast<Eigen::Index>(i)) = FlatReader::parse_number<double>(key, items[i]);
  return v;
}

json run_oracle(const std::string& name, FlatMap args) {
  auto take = [&](const std::string& k, const std::string& dflt) {
    if (!args.count(k)) args[k] = dflt;
  };
  json j{{"oracle", name}};
  if (name == "whitening") {
    for (auto [k, v] : {std::pair{"d", "8"}, {"m", "10000"}, {"structure", "diagonal"}, {"rho", "0.5"}, {"seed", "0"}, {"exact", "true"}})
      take(k, v);
    const FlatReader r(args);
    oracles::CorrelationStructure s;
    const auto& kind = r.str("structure");
    if (kind == "identity") s = oracles::CorrelationStructure::identity();
    else if (kind == "diagonal") s = oracles::CorrelationStructure::diagonal();
    else if (kind == "equicorrelated") s = oracles::CorrelationStructure::equicorrelated(r.real("rho"));
    else throw ConfigError("structure must be identity, diagonal or equicorrelated");
    const auto w = oracles::whitening_oracle(r.count("d"), r.count("m"), s, r.u64("seed"), r.flag("exact"));
    j["gap"] = w.gap;
  } else if (name == "regression") {
    for (auto [k, v] : {std::pair{"h", "sin"}, {"capacity", "12"}, {"seed", "0"}, {"sigma", "0.3"}, {"bias", "0"}, {"n_train", "20000"},
                        {"n_test", "5000"}, {"h_seed", "0"}})
      take(k, v);
    const FlatReader r(args);
    oracles::DecompositionSpec spec{r.str("h"), r.u64("h_seed"), r.real("sigma"), r.real("bias"), r.count("n_train"), r.count("n_test")};
    const auto res = oracles::regression_recovery_oracle(spec, r.count("capacity"), r.u64("seed"));
    j.update({{"test_mse_vs_h", res.test_mse_vs_h}, {"noise_floor", res.noise_floor}, {"offset", res.offset}, {"train_mse", res.train_mse},
              {"recovered", res.recovered}, {"offset_flag", res.offset_flag}, {"capacity_flag", res.capacity_flag}});
  } else if (name == "gaussian_mi") {
    take("rho", "0.8");
    j["mi"] = oracles::gaussian_mi_oracle(FlatReader(args).real("rho"));
  } else if (name == "fd_diagonal") {
    for (auto [k, v] : {std::pair{"mu1", "0"}, {"var1", "1"}, {"mu2", "0"}, {"var2", "1"}}) take(k, v);
    const FlatReader r(args);
    j["fd"] = oracles::fd_diagonal_oracle(vec_arg(r, "mu1"), vec_arg(r, "var1"), vec_arg(r, "mu2"), vec_arg(r, "var2"));
  } else if (name == "linear_lipschitz") {
    for (auto [k, v] : {std::pair{"rows", "10"}, {"cols", "10"}, {"seed", "0"}}) take(k, v);
    const FlatReader r(args);
    Eigen::MatrixXd w(static_cast<Eigen::Index>(r.count("rows")), static_cast<Eigen::Index>(r.count("cols")));
    Rng rng(r.u64("seed"));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    const auto res = oracles::linear_lipschitz_oracle_detailed(w);
    j.update({{"sigma_max", res.sigma_max}, {"iterations", res.iterations}, {"converged", res.converged}});
  } else {
    throw ConfigError("unknown oracle '" + name + "' (whitening, regression, gaussian_mi, fd_diagonal, linear_lipschitz)");
  }
  return j;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAFR2 training, evaluation and analysis"};
  app.require_subcommand(1);
  std::function<int()> action;

  {
    auto* c = app.add_subcommand("synth", "write a synthetic shapes dataset");
    static std::size_t n = 1000, size = 16;
    static std::uint64_t seed = 0;
    static std::string out;
    c->add_option("--n", n);
    c->add_option("--size", size);
    c->add_option("--seed", seed);
    c->add_option("--out", out)->required();
    c->callback([&] {
      action = [] {
        save_dataset(synth_shapes(n, seed, size), out);
        return 0;
      };
    });
  }
  {
    auto* c = app.add_subcommand("corrupt", "apply one corruption to a dataset directory");
    static std::string in, kind, out;
    static int severity = 3;
    static std::uint64_t seed = 0;
    c->add_option("--in", in)->required();
    c->add_option("--kind", kind)->required();
    c->add_option("--severity", severity);
    c->add_option("--seed", seed);
    c->add_option("--out", out)->required();
    c->callback([&] {
      action = [] {
        if (severity < 1 || severity > 5) throw ConfigError("--severity must be 1..5");
        CorruptionKind k;
        try {
          k = parse_kind(kind);
        } catch (const Error& e) {
          throw ConfigError(e.what());
        }
        save_dataset(corrupt(load_unlabeled_dataset(in), {k, severity, seed}), out);
        return 0;
      };
    });
  }
  {
    static ConfigArgs cfg;
    static std::string data, out;
    auto* c = app.add_subcommand("train-baseline", "source-only training");
    cfg.attach(c);
    c->add_option("--data", data, "labelled source dataset dir; synthetic from the config when omitted");
    c->add_option("--out", out, "checkpoint dir")->required();
    c->callback([&] {
      action = [] {
        const auto conf = cfg.load();
        const auto src = source_data(conf, data);
        print_epochs(train_baseline(src, train_config_for(conf, src, out)));
        return 0;
      };
    });
  }
  {
    static ConfigArgs cfg;
    static std::string data, target, out;
    auto* c = app.add_subcommand("train-dafr2", "source training with feature regression onto a target domain");
    cfg.attach(c);
    c->add_option("--data", data, "labelled source dataset dir");
    c->add_option("--target", target, "target dataset dir; the first configured corruption of the target pool when omitted");
    c->add_option("--out", out, "checkpoint dir")->required();
    c->callback([&] {
      action = [] {
        const auto conf = cfg.load();
        const auto src = source_data(conf, data);
        UnlabeledDataset tgt;
        if (!target.empty()) {
          tgt = load_unlabeled_dataset(target);
        } else {
          if (conf.corruptions.empty()) throw ConfigError("no --target given and the config lists no corruptions");
          const auto d = load_experiment_data(conf, conf.seed);
          const auto& e = conf.corruptions.front();
          tgt = corrupt(d.target_pool, {e.kind, e.severity, e.seed(conf.seed, 0xc1)});
        }
        print_epochs(train_dafr2(src, tgt, train_config_for(conf, src, out)));
        return 0;
      };
    });
  }
  {
    static std::string checkpoint, data, route = "adapted", out;
    auto* c = app.add_subcommand("evaluate", "accuracy and CE of one route on a labelled dataset");
    c->add_option("--checkpoint", checkpoint)->required();
    c->add_option("--data", data)->required();
    c->add_option("--route", route);
    c->add_option("--out", out, "metrics.jsonl to append to");
    c->callback([&] {
      action = [] {
        const auto r = evaluate(fs::path(checkpoint), load_labeled_dataset(data), parse_route(route));
        if (!out.empty()) MetricsLog(out).append(r.records(checkpoint));
        std::cout << json{{"route", route}, {"accuracy", r.accuracy}, {"mean_ce", r.mean_ce}, {"n", r.n}, {"provenance", r.provenance}}.dump() << "\n";
        return 0;
      };
    });
  }
  {
    static std::string what, bundle, baseline, data, source, out;
    static std::size_t samples = 20000, mi_steps = 2000;
    static std::uint64_t seed = 0;
    auto* c = app.add_subcommand("analyze", "mi | fd | llc | scatter | features2d | plots");
    c->add_option("what", what)->required()->check(CLI::IsMember({"mi", "fd", "llc", "scatter", "features2d", "plots"}));
    c->add_option("--bundle", bundle, "adapted checkpoint dir, or the run dir for plots");
    c->add_option("--baseline", baseline, "baseline checkpoint dir");
    c->add_option("--data", data, "labelled target-domain dataset dir");
    c->add_option("--source", source, "clean dataset dir, paired index by index with --data");
    c->add_option("--samples", samples, "Lipschitz probe count");
    c->add_option("--mi-steps", mi_steps);
    c->add_option("--seed", seed);
    c->add_option("--out", out);
    c->callback([&] {
      action = [] {
        if (what == "plots") {
          if (bundle.empty()) throw ConfigError("analyze plots needs --bundle <run dir>");
          const auto r = write_report(bundle);
          std::cout << "wrote " << r.files.size() << " files, skipped " << r.skipped << " lines\n";
          return 0;
        }
        if (bundle.empty() || baseline.empty() || data.empty()) throw ConfigError("analyze needs --bundle, --baseline and --data");
        auto adapted_b = nn::load_checkpoint<float>(bundle);
        auto base_b = nn::load_checkpoint<float>(baseline);
        if (!adapted_b.f_t) throw ConfigError(bundle + " has no f_t; pass a DAFR2 checkpoint as --bundle");
        const auto target = load_labeled_dataset(data);
        if (what == "scatter") {
          std::string csv;
          for (auto kind : {ScatterKind::ce_loss, ScatterKind::nn_feature_distance}) {
            const auto rep = scatter_report(adapted_b, base_b, target, kind);
            csv += "# kind=" + std::string(scatter_kind_name(kind)) + " median_baseline=" + cli::detail::fmt(rep.median_baseline(), 6) +
                   " median_adapted=" + cli::detail::fmt(rep.median_adapted(), 6) + "\n" + rep.to_csv();
          }
          emit(out, csv);
          return 0;
        }
        json j{{"metric", what}};
        if (what == "llc") {
          for (Route r : {Route::baseline, Route::adapted}) {
            const auto v = route_view(base_b, adapted_b, r);
            j[std::string(route_name(r))] =
                local_lipschitz(classifier_probe(v), samples, view_input_shape(v, target.height(), target.width()), seed).value;
          }
          emit(out, j.dump() + "\n");
          return 0;
        }
        if (source.empty()) throw ConfigError("analyze " + what + " needs --source");
        const auto clean = load_labeled_dataset(source);
        if (what == "features2d") {
          ProbeConfig pc;
          pc.seed = seed;
          emit(out, export_features_2d(base_b, adapted_b, {{"source", &clean}, {"target", &target}}, pc).to_csv());
          return 0;
        }
        const std::size_t n = std::min(clean.size(), target.size());
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        const auto cs = subset(clean, idx), ts = subset(target, idx);
        for (Route r : {Route::baseline, Route::adapted}) {
          const auto v = route_view(base_b, adapted_b, r);
          const auto a = embed_matrix(v, cs.images), b = embed_matrix(v, ts.images);
          MineConfig mc;
          mc.steps = mi_steps;
          mc.seed = seed;
          j[std::string(route_name(r))] = what == "mi" ? estimate_mi(a, b, mc) : frechet_distance(a, b);
        }
        emit(out, j.dump() + "\n");
        return 0;
      };
    });
  }
  {
    static std::string name;
    static std::vector<std::string> kv;
    auto* c = app.add_subcommand("oracle", "closed-form and synthetic reference values");
    c->add_option("name", name)->required();
    c->add_option("args", kv, "key=value");
    c->callback([&] {
      action = [] {
        std::cout << run_oracle(name, oracle_args(kv)).dump() << "\n";
        return 0;
      };
    });
  }
  {
    static ConfigArgs cfg;
    static std::size_t seeds = 1;
    static std::string out;
    auto* c = app.add_subcommand("run", "full pipeline over one or more seeds");
    cfg.attach(c);
    c->add_option("--seeds", seeds, "number of consecutive seeds starting at `seed`");
    c->add_option("--out", out, "run directory (overrides output.dir)");
    c->callback([&] {
      action = [] {
        auto ov = cfg.overrides;
        if (!out.empty()) ov.push_back("output.dir=" + out);
        const auto conf = load_config(cfg.file.empty() ? std::nullopt : std::optional<fs::path>(cfg.file), ov);
        const auto status = run_experiment(conf, seeds);
        if (status.exit_code != 0) {
          std::cerr << "run failed: " << status.message << "\n";
          return status.exit_code;
        }
        const auto r = write_report(conf.output_dir);
        std::cerr << "report: " << (conf.output_dir / "report").string() << " (" << r.files.size() << " files)\n";
        return 0;
      };
    });
  }
  {
    static std::string dir;
    auto* c = app.add_subcommand("report", "summarize a run directory");
    c->add_option("run_dir", dir)->required();
    c->callback([&] {
      action = [] {
        const auto r = write_report(dir);
        std::cout << "records " << r.records << ", skipped " << r.skipped << ", files " << r.files.size() << "\n";
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return guarded(action);
}
