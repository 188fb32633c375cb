#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "dafr2/cli/experiment.hpp"
#include "dafr2/cli/report.hpp"

using namespace dafr2;
using namespace dafr2::cli;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> tiny_overrides(const fs::path& out) {
  return {"experiment.name=tiny",
          "output.dir=" + out.string(),
          "dataset.n_train=200",
          "dataset.n_target=200",
          "dataset.n_test=120",
          "trainer.epochs=1",
          "trainer.schedule.t_max=1",
          "trainer.batch_size=32",
          "trainer.architecture.widths=4,8",
          "trainer.architecture.embedding_dim=8",
          "analysis.samples=120",
          "analysis.mi.steps=20",
          "analysis.mi.batch=32",
          "analysis.llc.samples=50",
          "analysis.features2d.points=40"};
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dafr2_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricRecord rec(const std::string& name, double v, std::map<std::string, std::string> tags) { return {name, {v}, std::move(tags), "", "r"}; }

int run_cli(const std::string& args) {
  const int status = std::system((std::string(DAFR2_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(FlatConfig, ParsesCommentsAndRejectsMalformedLines) {
  const auto m = parse_flat("# header\n a = 1 \n\nb.c=x, y # trailing\n");
  EXPECT_EQ(m.at("a"), "1");
  EXPECT_EQ(m.at("b.c"), "x, y");
  EXPECT_THROW(parse_flat("novalue\n"), ConfigError);
  EXPECT_THROW(parse_flat("= 3\n"), ConfigError);
  EXPECT_THROW(parse_flat("a=1\na=2\n"), ConfigError);
  EXPECT_EQ(parse_flat(render_flat(m)), m);
}

TEST(FlatConfig, TypedReadsNameTheKey) {
  const FlatMap m{{"n", "12"}, {"x", "2.5"}, {"bad", "3x"}, {"on", "yes"}, {"ws", "4, 8 ,16"}};
  const FlatReader r(m);
  EXPECT_EQ(r.count("n"), 12u);
  EXPECT_DOUBLE_EQ(r.real("x"), 2.5);
  EXPECT_TRUE(r.flag("on"));
  EXPECT_EQ(r.counts("ws"), (std::vector<std::size_t>{4, 8, 16}));
  try {
    r.count("bad");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
  }
  EXPECT_THROW(r.str("missing"), ConfigError);
  EXPECT_THROW(r.flag("x"), ConfigError);
}

TEST(ExperimentConfig, DefaultsAreCompleteAndOverridesApply) {
  const auto c = resolve_config({{"trainer.epochs", "3"}}, {"seed=7", "corruptions=fog:2, gaussian_noise:5", "trainer.architecture.widths=8,16"});
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train.seed, 7u);
  ASSERT_EQ(c.corruptions.size(), 2u);
  EXPECT_EQ(c.corruptions[0].label(), "fog_s2");
  EXPECT_EQ(c.corruptions[1].severity, 5);
  EXPECT_EQ(c.train.architecture.widths, (std::vector<std::size_t>{8, 16}));
  EXPECT_EQ(c.resolved.size(), default_flat().size());
  EXPECT_EQ(resolve_config(parse_flat(render_flat(c.resolved))).resolved, c.resolved);
}

TEST(ExperimentConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(resolve_config({{"trainer.epoch", "3"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"trainer.batch_size=1"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"corruptions=gaussian_noise:6"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"corruptions=snow:2"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"corruptions=warp:2"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"dataset.kind=mnist"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"trainer.target_init=twin"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"analysis.mi.batch=1"}), ConfigError);
  EXPECT_THROW(resolve_config({}, {"noequals"}), ConfigError);
}

TEST(ExperimentConfig, OutputDirFollowsEnvironment) {
  ::setenv("DAFR2_OUT", "/tmp/dafr2_env_root", 1);
  EXPECT_EQ(resolve_config({}, {"experiment.name=abc"}).output_dir, fs::path("/tmp/dafr2_env_root/abc"));
  ::unsetenv("DAFR2_OUT");
  EXPECT_EQ(resolve_config({}, {"experiment.name=abc"}).output_dir, fs::path("runs/abc"));
}

TEST(ExperimentData, SyntheticSplitsAreSeededAndShareNormalization) {
  const auto c = resolve_config({}, {"dataset.n_train=50", "dataset.n_target=30", "dataset.n_test=20"});
  const auto a = load_experiment_data(c, 1), b = load_experiment_data(c, 1), other = load_experiment_data(c, 2);
  EXPECT_EQ(a.train.size(), 50u);
  EXPECT_EQ(a.target_pool.size(), 30u);
  EXPECT_EQ(a.test.size(), 20u);
  EXPECT_EQ(a.train.images, b.train.images);
  EXPECT_NE(a.train.images, other.train.images);
  EXPECT_EQ(a.test.normalization, a.train.normalization);
}

TEST(ExperimentData, NativeDatasetDirectoryIsSplitIntoSourceAndTargetPool) {
  const auto root = fresh_dir("native");
  save_dataset(synth_shapes(100, 1, 12), root / "train");
  save_dataset(synth_shapes(40, 2, 12), root / "test");
  const auto c = resolve_config({}, {"dataset.kind=native", "dataset.path=" + root.string(), "dataset.target_fraction=0.3"});
  const auto d = load_experiment_data(c, 0);
  EXPECT_EQ(d.train.size() + d.target_pool.size(), 100u);
  EXPECT_NEAR(static_cast<double>(d.target_pool.size()), 30.0, 1.0);
  EXPECT_EQ(d.test.size(), 40u);
  fs::remove_all(root / "test");
  EXPECT_THROW(check_dataset_available(c), ConfigError);
  fs::remove_all(root);
}

TEST(Report, MeanStdAndPerSeedGain) {
  std::vector<MetricRecord> rs;
  const double base[3] = {0.5, 0.6, 0.7}, ad[3] = {0.8, 0.8, 0.9};
  for (int s = 0; s < 3; ++s) {
    const std::string seed = std::to_string(s);
    rs.push_back(rec("accuracy", base[s], {{"route", "baseline"}, {"corruption", "fog"}, {"severity", "2"}, {"eval", "corrupted"}, {"seed", seed}}));
    rs.push_back(rec("accuracy", ad[s], {{"route", "adapted"}, {"corruption", "fog"}, {"severity", "2"}, {"eval", "corrupted"}, {"seed", seed}}));
  }
  rs.push_back({"epoch_l_ce", {1.0, 0.5}, {{"seed", "0"}}, "", "r"});
  const auto rows = summarize_records(rs);
  ASSERT_EQ(rows.size(), 3u);  // vectors are not summarized
  const SummaryRow* g = nullptr;
  for (const auto& r : rows)
    if (r.metric == "accuracy_gain") g = &r;
  ASSERT_NE(g, nullptr);
  EXPECT_NEAR(g->mean, (0.3 + 0.2 + 0.2) / 3, 1e-12);
  EXPECT_EQ(g->n, 3u);
  for (const auto& r : rows)
    if (r.metric == "accuracy" && r.tags.at("route") == "baseline") {
      EXPECT_NEAR(r.mean, 0.6, 1e-12);
      EXPECT_NEAR(r.stddev, 0.1, 1e-12);
      EXPECT_EQ(r.tags.count("seed"), 0u);
    }
}

TEST(Report, CountsUnreadableLinesAndIsByteStable) {
  const auto dir = fresh_dir("report");
  fs::create_directories(dir);
  MetricsLog log(dir / "metrics.jsonl");
  log.append(rec("accuracy", 0.9, {{"route", "baseline"}, {"corruption", "none"}, {"severity", "0"}, {"eval", "clean"}, {"seed", "0"}}));
  {
    std::ofstream out(dir / "metrics.jsonl", std::ios::app);
    out << "{\"name\": truncated\n";
  }
  const auto r1 = write_report(dir);
  EXPECT_EQ(r1.records, 1u);
  EXPECT_EQ(r1.skipped, 1u);
  const auto md = slurp(dir / "report" / "summary.md");
  EXPECT_NE(md.find("Skipped 1"), std::string::npos);
  EXPECT_NE(slurp(dir / "report" / "accuracy.svg").find("<svg"), std::string::npos);
  write_report(dir);
  EXPECT_EQ(slurp(dir / "report" / "summary.md"), md);
  fs::remove_all(dir);
}

TEST(Svg, EscapesTextAndDrawsDiagonal) {
  EXPECT_EQ(svg::escape("a<b&c>"), "a&lt;b&amp;c&gt;");
  const auto s = svg::scatter_plot("t", {{"pts", "#000", {0, 1, 2}, {0, 1, 1}}}, "loss");
  EXPECT_NE(s.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(s.find("pts (3)"), std::string::npos);
}

TEST(Experiment, MissingDatasetFailsBeforeTraining) {
  const auto out = fresh_dir("missing");
  auto ov = tiny_overrides(out);
  ov.push_back("dataset.kind=mnist");
  ov.push_back("dataset.path=/nonexistent/mnist");
  const auto c = resolve_config({}, ov);
  const auto st = run_experiment(c, 1, std::cerr);
  EXPECT_EQ(st.exit_code, 2);
  EXPECT_FALSE(fs::exists(out / "seed0"));
  fs::remove_all(out);
}

TEST(Experiment, TinyRunWritesArtifactsAndReport) {
  const auto out = fresh_dir("tiny");
  const auto c = resolve_config({}, tiny_overrides(out));
  std::ostringstream log;
  const auto st = run_experiment(c, 2, log);
  ASSERT_EQ(st.exit_code, 0) << st.message;
  EXPECT_TRUE(fs::exists(out / "seed0" / "baseline" / "manifest.json"));
  EXPECT_TRUE(fs::exists(out / "seed1" / "gaussian_noise_s3" / "manifest.json"));
  EXPECT_EQ(parse_flat(slurp(out / "config.resolved")), c.resolved);
  const auto m = read_metrics(out / "metrics.jsonl");
  EXPECT_EQ(m.skipped, 0u);
  std::set<std::string> names;
  for (const auto& r : m.records) names.insert(r.name);
  for (const char* n : {"accuracy", "mean_ce", "mi", "fd", "llc", "scatter_median", "scatter_values", "features2d_x", "epoch_l_regression"})
    EXPECT_TRUE(names.count(n)) << n;
  const auto rep = write_report(out);
  const auto md = slurp(out / "report" / "summary.md");
  EXPECT_NE(md.find("accuracy_gain"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "report" / "scatter_ce_loss_gaussian_noise_s3.svg"));
  EXPECT_TRUE(fs::exists(out / "report" / "features2d_gaussian_noise_s3.svg"));

  // rerunning truncates the log instead of appending to it
  ASSERT_EQ(run_experiment(c, 2, log).exit_code, 0);
  EXPECT_EQ(read_metrics(out / "metrics.jsonl").records.size(), m.records.size());
  write_report(out);
  EXPECT_EQ(slurp(out / "report" / "summary.md"), md);
  fs::remove_all(out);
}

TEST(Experiment, ZeroCorruptionsGivesCleanOnlySummary) {
  const auto out = fresh_dir("clean_only");
  auto ov = tiny_overrides(out);
  ov.push_back("corruptions=");
  const auto c = resolve_config({}, ov);
  ASSERT_EQ(run_experiment(c, 1, std::cerr).exit_code, 0);
  const auto rep = write_report(out);
  for (const auto& r : rep.rows) EXPECT_TRUE(r.tags.count("corruption") == 0 || r.tags.at("corruption") == "none") << r.metric;
  EXPECT_FALSE(rep.rows.empty());
  fs::remove_all(out);
}

TEST(Experiment, FailedStageLeavesMarker) {
  const auto out = fresh_dir("fail");
  auto ov = tiny_overrides(out);
  ov.push_back("trainer.source_opt.lr=1e30");
  const auto st = run_experiment(resolve_config({}, ov), 1, std::cerr);
  EXPECT_EQ(st.exit_code, 3) << st.message;
  EXPECT_NE(slurp(out / "FAILED").find("train-baseline"), std::string::npos);
  fs::remove_all(out);
}

TEST(Binary, ExitCodesAndOracleOutput) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("run --set nope=1"), 2);
  EXPECT_EQ(run_cli("oracle gaussian_mi rho=0.5"), 0);
  EXPECT_EQ(run_cli("oracle unknown"), 2);
  const auto dir = fresh_dir("bin");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("synth --n 20 --size 12 --out " + (dir / "clean").string()), 0);
  EXPECT_EQ(run_cli("corrupt --in " + (dir / "clean").string() + " --kind fog --severity 2 --out " + (dir / "fog").string()), 0);
  const auto fog = load_unlabeled_dataset(dir / "fog");
  EXPECT_EQ(fog.size(), 20u);
  EXPECT_TRUE(fog.reference_labels.has_value());
  EXPECT_EQ(run_cli("corrupt --in " + (dir / "clean").string() + " --kind fog --severity 9 --out " + (dir / "x").string()), 2);
  EXPECT_EQ(run_cli("evaluate --checkpoint " + (dir / "none").string() + " --data " + (dir / "fog").string()), 4);
  fs::remove_all(dir);
}
