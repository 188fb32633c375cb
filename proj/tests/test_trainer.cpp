#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "dafr2/corruptions/corruption.hpp"
#include "dafr2/datasets/synth_shapes.hpp"
#include "dafr2/trainer/presets.hpp"
#include "dafr2/trainer/trainer.hpp"

using namespace dafr2;

namespace {

TrainConfig tiny_config(std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 2;
  cfg.schedule.t_max = 2;
  cfg.batch_size = 16;
  cfg.architecture.widths = {4, 8};
  cfg.architecture.embedding_dim = 8;
  cfg.augmentation.crop_pad = 1;
  return cfg;
}

UnlabeledDataset noisy(const LabeledDataset& ds, std::uint64_t seed, int severity = 3) {
  return corrupt(ds, {CorruptionKind::gaussian_noise, severity, seed});
}

std::string params_of(nn::FeatureExtractor<float>& f) { return nn::parameter_checksum(f.parameters()); }
std::string params_of(nn::ClassifierHead<float>& g) { return nn::parameter_checksum(g.parameters()); }
std::string bn_of(nn::FeatureExtractor<float>& f) { return nn::buffer_checksum(f.buffers()); }

Tensor<float> rows(const LabeledDataset& ds, std::size_t from, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), from);
  return gather_rows(ds.images, idx);
}

}  // namespace

TEST(Config, ValidationRejectsBadValues) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.source_opt.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.target_opt.kind = "sgd";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, DefaultsFollowTheReferenceRecipe) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.source_opt.lr, 0.1);
  EXPECT_EQ(cfg.source_opt.weight_decay, 1e-4);
  EXPECT_EQ(cfg.target_opt.lr, 1e-3);
  EXPECT_EQ(cfg.target_opt.weight_decay, 1e-4);
  EXPECT_EQ(cfg.schedule.t_max, 300u);
  EXPECT_EQ(cfg.schedule.eta_min, 1e-4);
  EXPECT_EQ(cfg.augmentation.crop_pad, 4u);
  EXPECT_EQ(cfg.augmentation.hflip_p, 0.5);
  EXPECT_EQ(cfg.batch_size, 128u);
  EXPECT_EQ(cfg.target_init, TargetInit::random);
}

TEST(SourceStep, UniformLogitsGiveLogK) {
  auto data = synth_shapes(16, 1, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  b.g_s.weight().fill(0.0f);
  b.g_s.bias().fill(0.0f);
  auto opt = make_source_optimizer(b, cfg);
  const auto rec = train_source_step(b, data.images, data.labels, opt);
  EXPECT_NEAR(rec.l_ce, std::log(4.0), 1e-6);
}

TEST(SourceStep, LeavesTargetAloneAndMovesSource) {
  auto data = synth_shapes(16, 1, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  const auto ft = params_of(*b.f_t), ft_bn = bn_of(*b.f_t), fs = params_of(b.f_s), gs = params_of(b.g_s);
  auto opt = make_source_optimizer(b, cfg);
  train_source_step(b, data.images, data.labels, opt);
  EXPECT_EQ(params_of(*b.f_t), ft);
  EXPECT_EQ(bn_of(*b.f_t), ft_bn);
  EXPECT_NE(params_of(b.f_s), fs);
  EXPECT_NE(params_of(b.g_s), gs);
}

TEST(SourceStep, SeparableBatchIsFitToLowLoss) {
  auto data = synth_shapes(16, 2, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, false);
  auto opt = make_source_optimizer(b, cfg);
  LossRecord rec;
  for (int i = 0; i < 300; ++i) rec = train_source_step(b, data.images, data.labels, opt);
  EXPECT_LT(rec.l_ce, 0.01);
}

TEST(SourceStep, NonFiniteLossIsDivergence) {
  auto data = synth_shapes(8, 1, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, false);
  b.g_s.weight()[0] = std::numeric_limits<float>::infinity();
  auto opt = make_source_optimizer(b, cfg);
  LossRecord last{41, 2};
  try {
    train_source_step(b, data.images, data.labels, opt, last);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.last_record().step, 41u);
  }
}

TEST(DistillStep, FreezesSourceParametersButMovesItsBnStats) {
  auto data = synth_shapes(32, 3, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  const auto z = noisy(data, 4).images;
  const auto fs = params_of(b.f_s), gs = params_of(b.g_s), fs_bn = bn_of(b.f_s), ft = params_of(*b.f_t);
  const auto mean_before = b.f_s.batch_norms().front()->running_mean();
  auto opt = make_target_optimizer(b, cfg);
  distill_step(b, rows(data, 0, 16), z, opt);
  EXPECT_EQ(params_of(b.f_s), fs);
  EXPECT_EQ(params_of(b.g_s), gs);
  EXPECT_NE(bn_of(b.f_s), fs_bn);
  EXPECT_NE(params_of(*b.f_t), ft);
  const auto& mean_after = b.f_s.batch_norms().front()->running_mean();
  for (std::size_t c = 0; c < mean_after.size(); ++c) EXPECT_NE(mean_after[c], mean_before[c]) << "channel " << c;
}

TEST(DistillStep, LossIsHalfSourcePlusHalfTarget) {
  auto data = synth_shapes(32, 3, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  auto opt = make_target_optimizer(b, cfg);
  const auto z = noisy(data, 5).images;
  for (int i = 0; i < 3; ++i) {
    const auto rec = distill_step(b, rows(data, 0, 16), z, opt);
    EXPECT_GT(rec.l_reg_source, 0.0);
    EXPECT_NEAR(rec.l_regression, 0.5 * rec.l_reg_source + 0.5 * rec.l_reg_target, 1e-9);
  }
}

TEST(DistillStep, CopiedTargetHasZeroRegressionLoss) {
  auto data = synth_shapes(32, 3, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  b.f_t = b.f_s;
  auto opt = make_target_optimizer(b, cfg);
  const auto rec = distill_step(b, rows(data, 0, 16), noisy(data, 5).images, opt);
  EXPECT_EQ(rec.l_regression, 0.0);
}

TEST(DistillStep, EmbeddingMismatchIsShapeError) {
  auto data = synth_shapes(8, 3, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  auto other = cfg.architecture;
  other.embedding_dim = 5;
  Rng rng(1);
  b.f_t.emplace(other, data.normalization, rng);
  auto opt = make_target_optimizer(b, cfg);
  EXPECT_THROW(distill_step(b, data.images, data.images, opt), ShapeError);
}

TEST(Training, BaselineAndAdaptedShareSourceWeights) {
  auto data = synth_shapes(64, 6, 12);
  const auto target = noisy(synth_shapes(64, 7, 12), 8);
  const auto cfg = tiny_config(3);
  auto base = train_baseline(data, cfg);
  auto ad = train_dafr2(data, target, cfg);
  EXPECT_EQ(params_of(base.bundle.f_s), params_of(ad.bundle.f_s));
  EXPECT_EQ(params_of(base.bundle.g_s), params_of(ad.bundle.g_s));
  EXPECT_NE(bn_of(base.bundle.f_s), bn_of(ad.bundle.f_s));
  EXPECT_FALSE(base.bundle.f_t.has_value());
  ASSERT_EQ(ad.epochs.size(), 2u);
  EXPECT_EQ(ad.epochs[0].steps, 4u);
}

TEST(Training, GsIsFrozenAcrossTheDistillationPhase) {
  // Drive the training loop by hand: checksums of f_s and g_s may only change in Step 1.
  auto data = synth_shapes(64, 6, 12);
  const auto target = noisy(synth_shapes(64, 7, 12), 8);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  auto sopt = make_source_optimizer(b, cfg);
  auto topt = make_target_optimizer(b, cfg);
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<std::size_t> idx(16);
    std::iota(idx.begin(), idx.end(), s * 16);
    std::vector<std::int64_t> y;
    for (auto i : idx) y.push_back(data.labels[i]);
    train_source_step(b, gather_rows(data.images, idx), y, sopt);
    const auto fs = params_of(b.f_s), gs = params_of(b.g_s);
    distill_step(b, gather_rows(data.images, idx), gather_rows(target.images, idx), topt);
    EXPECT_EQ(params_of(b.f_s), fs);
    EXPECT_EQ(params_of(b.g_s), gs);
  }
}

TEST(Training, IdenticalRunsGiveIdenticalCheckpoints) {
  const auto root = std::filesystem::temp_directory_path() / "dafr2_trainer_det";
  std::filesystem::remove_all(root);
  auto data = synth_shapes(48, 6, 12);
  const auto target = noisy(synth_shapes(48, 7, 12), 8);
  for (const char* run : {"a", "b"}) {
    auto cfg = tiny_config(9);
    cfg.checkpoint_dir = root / run;
    train_dafr2(data, target, cfg);
  }
  for (const auto& e : std::filesystem::directory_iterator(root / "a"))
    EXPECT_EQ(io::read_bytes(e.path()), io::read_bytes(root / "b" / e.path().filename())) << e.path();
  std::filesystem::remove_all(root);
}

TEST(Training, CopyInitStartsAtZeroRegression) {
  auto data = synth_shapes(48, 6, 12);
  auto cfg = tiny_config();
  cfg.target_init = TargetInit::copy;
  cfg.epochs = 1;
  cfg.source_opt.lr = 1e-12;  // Step 1 barely moves f_s, so f_t starts as its twin
  cfg.schedule.eta_min = 1e-12;
  const auto res = train_dafr2(data, as_unlabeled(data), cfg);
  EXPECT_LT(res.history.front().l_regression, 1e-10);
}

TEST(Training, RejectsMismatchedGeometry) {
  auto data = synth_shapes(16, 1, 12);
  const auto other = noisy(synth_shapes(16, 1, 16), 2);
  EXPECT_THROW(train_dafr2(data, other, tiny_config()), ShapeError);
  auto cfg = tiny_config();
  cfg.architecture.in_channels = 3;
  EXPECT_THROW(train_baseline(data, cfg), ConfigError);
}

TEST(Inference, EvalIsPureAndArgmaxIsRight) {
  auto data = synth_shapes(20, 1, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  const auto bn = bn_of(*b.f_t);
  const auto p1 = infer(b, data.images), p2 = infer(b, data.images);
  EXPECT_EQ(p1.labels, p2.labels);
  EXPECT_EQ(p1.logits, p2.logits);
  EXPECT_EQ(bn_of(*b.f_t), bn);
  EXPECT_EQ(nn::argmax_rows(Tensor<float>({1, 2}, {3.1f, -0.2f})).front(), 0);
}

TEST(Evaluate, ConfusionAccountingAndConstantPredictor) {
  auto data = synth_shapes(200, 4, 12);
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 4, data.normalization, 0, true);
  b.g_s.weight().fill(0.0f);
  b.g_s.bias().fill(0.0f);
  b.g_s.bias()[2] = 1.0f;
  const auto r = evaluate(b, data, Route::baseline);
  std::vector<std::size_t> counts(4, 0);
  for (auto y : data.labels) ++counts[static_cast<std::size_t>(y)];
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(std::accumulate(r.confusion[k].begin(), r.confusion[k].end(), std::size_t{0}), counts[k]);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(counts[2]) / 200.0);
  const auto recs = r.records("run", {{"seed", "0"}});
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].tags.at("route"), "baseline");
  EXPECT_EQ(recs[0].tags.at("corruption"), "none");
}

TEST(Evaluate, RandomModelIsAtChanceOnRandomLabels) {
  auto data = synth_shapes(3000, 4, 12);
  Rng rng(17);
  for (auto& y : data.labels) y = static_cast<std::int64_t>(rng.below(10));
  data.num_classes = 10;
  auto cfg = tiny_config();
  auto b = nn::make_bundle<float>(cfg.architecture, 10, data.normalization, 0, true);
  const double acc = evaluate(b, data, Route::adapted).accuracy;
  EXPECT_NEAR(acc, 0.1, 3 * std::sqrt(0.09 / 3000));
}

TEST(Evaluate, CorruptedSetsCarryTheirTags) {
  auto data = synth_shapes(20, 4, 12);
  auto b = nn::make_bundle<float>(tiny_config().architecture, 4, data.normalization, 0, true);
  const auto r = evaluate(b, noisy(data, 1, 4), Route::adapted);
  const auto recs = r.records("run");
  EXPECT_EQ(recs[0].tags.at("corruption"), "gaussian_noise");
  EXPECT_EQ(recs[0].tags.at("severity"), "4");
  UnlabeledDataset bare = as_unlabeled(data);
  bare.reference_labels.reset();
  EXPECT_THROW(evaluate(b, bare, Route::adapted), ParameterError);
}

// Slower statistical checks on the desk-scale synthetic task.

TEST(DeskScale, NoShiftTargetKeepsSourceAccuracy) {
  auto train = synth_shapes(2000, 100, 16);
  auto test = synth_shapes(1000, 900, 16);
  test.normalization = train.normalization;
  const auto cfg = desk_train_config(0);
  auto base = train_baseline(train, cfg);
  auto ad = train_dafr2(train, as_unlabeled(train), cfg);
  const double b = evaluate(base.bundle, test, Route::baseline).accuracy;
  const double a = evaluate(ad.bundle, test, Route::adapted).accuracy;
  EXPECT_NEAR(a, b, 0.01);
}

TEST(DeskScale, RegressionLossDoesNotRiseOverFirstFiveEpochs) {
  std::vector<double> mean(5, 0.0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto train = synth_shapes(2000, 100 + seed, 16);
    const auto target = noisy(synth_shapes(2000, 500 + seed, 16), 11 + seed);
    const auto res = train_dafr2(train, target, desk_train_config(seed));
    for (std::size_t e = 0; e < 5; ++e) mean[e] += res.epochs[e].mean_l_regression / 3.0;
  }
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LE(mean[e], mean[e - 1]) << "epoch " << e << " vs " << e - 1;
}
