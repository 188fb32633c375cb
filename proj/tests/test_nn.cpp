#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dafr2/nn/checkpoint.hpp"
#include "dafr2/nn/covariance.hpp"
#include "dafr2/nn/gradcheck.hpp"
#include "dafr2/nn/loss.hpp"
#include "dafr2/nn/model.hpp"
#include "dafr2/nn/optim.hpp"

using namespace dafr2;
using namespace dafr2::nn;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

Tensor<float> random_images(std::size_t n, std::size_t c, std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({n, c, s, s});
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
  return t;
}

ArchitectureConfig tiny_arch() {
  ArchitectureConfig a;
  a.widths = {4, 8};
  a.embedding_dim = 6;
  return a;
}

// Lets the gradient checker drive a whole extractor.
class ExtractorAsLayer final : public Layer<double> {
 public:
  explicit ExtractorAsLayer(FeatureExtractor<double>& f) : f_(f) {}
  Tensor<double> forward(const Tensor<double>& x, Mode mode) override { return f_.forward_normalized(x, mode); }
  Tensor<double> backward(const Tensor<double>& g) override { return f_.backward(g); }
  void collect_parameters(const std::string&, std::vector<Parameter<double>*>& out) override {
    for (auto* p : f_.parameters()) out.push_back(p);
  }
  std::unique_ptr<Layer<double>> clone() const override { return nullptr; }

 private:
  FeatureExtractor<double>& f_;
};

constexpr double kGradTol = 1e-4;

}  // namespace

TEST(GradCheck, Linear) {
  Rng rng(1);
  Linear<double> layer(7, 5, rng);
  const auto r = gradient_check(layer, random_tensor({4, 7}, 2), Mode::train, 3);
  EXPECT_LT(r.worst_rel_error, kGradTol) << r.worst_name;
}

TEST(GradCheck, Conv2dStrideAndPadding) {
  Rng rng(4);
  for (std::size_t stride : {1u, 2u}) {
    Conv2d<double> conv(2, 3, 3, stride, 1, true, rng);
    const auto r = gradient_check(conv, random_tensor({2, 2, 5, 5}, 5), Mode::train, 6);
    EXPECT_LT(r.worst_rel_error, kGradTol) << "stride " << stride << " " << r.worst_name;
  }
  Conv2d<double> pointwise(3, 2, 1, 2, 0, false, rng);
  const auto r = gradient_check(pointwise, random_tensor({2, 3, 4, 4}, 7), Mode::train, 8);
  EXPECT_LT(r.worst_rel_error, kGradTol) << r.worst_name;
}

TEST(GradCheck, BatchNormTrainAndEval) {
  for (Mode mode : {Mode::train, Mode::eval}) {
    BatchNorm<double> bn2(5);
    bn2.gamma_param().value = random_tensor({5}, 9);
    const auto r2 = gradient_check(bn2, random_tensor({6, 5}, 10, 2.0), mode, 11);
    EXPECT_LT(r2.worst_rel_error, kGradTol) << r2.worst_name;

    BatchNorm<double> bn4(3);
    bn4.beta_param().value = random_tensor({3}, 12);
    const auto r4 = gradient_check(bn4, random_tensor({3, 3, 4, 4}, 13), mode, 14);
    EXPECT_LT(r4.worst_rel_error, kGradTol) << r4.worst_name;
  }
}

TEST(GradCheck, ReluAndPool) {
  ReLU<double> relu;
  // keep inputs away from the kink
  Tensor<double> x = random_tensor({3, 8}, 15);
  for (auto& v : x.values()) v += (v >= 0 ? 0.1 : -0.1);
  EXPECT_LT(gradient_check(relu, x, Mode::train, 16).worst_rel_error, kGradTol);

  GlobalAvgPool<double> pool;
  EXPECT_LT(gradient_check(pool, random_tensor({2, 3, 4, 5}, 17), Mode::train, 18).worst_rel_error, kGradTol);
}

TEST(GradCheck, BasicBlockWithAndWithoutShortcut) {
  Rng rng(19);
  BasicBlock<double> same(3, 3, 1, 0.1, 1e-5, rng);
  const auto r1 = gradient_check(same, random_tensor({3, 3, 4, 4}, 20), Mode::train, 21);
  EXPECT_LT(r1.worst_rel_error, kGradTol) << r1.worst_name;
  BasicBlock<double> down(3, 4, 2, 0.1, 1e-5, rng);
  const auto r2 = gradient_check(down, random_tensor({3, 3, 6, 6}, 22), Mode::train, 23);
  EXPECT_LT(r2.worst_rel_error, kGradTol) << r2.worst_name;
}

TEST(GradCheck, FullExtractorInEvalMode) {
  Rng rng(24);
  FeatureExtractor<double> f(tiny_arch(), {}, rng);
  // give BN non-trivial running statistics first
  for (int i = 0; i < 3; ++i) f.forward(random_images(8, 1, 8, 25 + i), Mode::train);
  ExtractorAsLayer adapter(f);
  const auto r = gradient_check(adapter, random_tensor({2, 1, 8, 8}, 30), Mode::eval, 31);
  EXPECT_LT(r.worst_rel_error, kGradTol) << r.worst_name;
}

TEST(GradCheck, CrossEntropyAndMse) {
  const auto logits = random_tensor({4, 3}, 32);
  const std::vector<std::int64_t> y{0, 2, 1, 2};
  const auto ce = cross_entropy(logits, y);
  const auto a = random_tensor({4, 3}, 33), b = random_tensor({4, 3}, 34);
  const auto m = mse(a, b);
  const double h = 1e-6;
  std::vector<double> num_ce(logits.size()), num_mse(a.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto up = logits, down = logits;
    up[i] += h;
    down[i] -= h;
    num_ce[i] = (cross_entropy(up, y).value - cross_entropy(down, y).value) / (2 * h);
    auto au = a, ad = a;
    au[i] += h;
    ad[i] -= h;
    num_mse[i] = (mse(au, b).value - mse(ad, b).value) / (2 * h);
  }
  EXPECT_LT(detail::rel_error(ce.grad.storage(), num_ce), kGradTol);
  EXPECT_LT(detail::rel_error(m.grad.storage(), num_mse), kGradTol);
}

TEST(Loss, UniformLogitsGiveLogK) {
  Tensor<double> logits({5, 10});
  const auto ce = cross_entropy(logits, std::vector<std::int64_t>{0, 1, 2, 3, 9});
  EXPECT_NEAR(ce.value, std::log(10.0), 1e-12);
}

TEST(Loss, MseAveragesOverBatchAndFeatures) {
  Tensor<double> a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> b({2, 2});
  EXPECT_DOUBLE_EQ(mse(a, b).value, (1 + 4 + 9 + 16) / 4.0);
}

TEST(BatchNormLayer, TrainOutputIsStandardised) {
  BatchNorm<double> bn(4);
  const auto y = bn.forward(random_tensor({64, 4, 3, 3}, 40, 3.0), Mode::train);
  const std::size_t spatial = 9;
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t s = 0; s < spatial; ++s) mean += y[(i * 4 + c) * spatial + s];
    mean /= 64.0 * spatial;
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t s = 0; s < spatial; ++s) sq += std::pow(y[(i * 4 + c) * spatial + s] - mean, 2);
    EXPECT_LE(std::abs(mean), 1e-6);
    EXPECT_NEAR(sq / (64.0 * spatial), 1.0, 1e-5 * 2);  // eps shifts the variance by eps/(var+eps)
  }
}

TEST(BatchNormLayer, RunningStatsUseEmaAndUnbiasedVariance) {
  BatchNorm<double> bn(1, 0.1);
  Tensor<double> x({4, 1}, std::vector<double>{1, 2, 3, 6});
  bn.forward(x, Mode::train);
  EXPECT_NEAR(bn.running_mean()[0], 0.1 * 3.0, 1e-12);
  EXPECT_NEAR(bn.running_var()[0], 0.9 + 0.1 * (14.0 / 3.0), 1e-12);
}

TEST(BatchNormLayer, SingleSampleTrainBatchIsRejected) {
  BatchNorm<float> bn(2);
  EXPECT_THROW(bn.forward(Tensor<float>({1, 2}), Mode::train), ParameterError);
  EXPECT_NO_THROW(bn.forward(Tensor<float>({1, 2}), Mode::eval));
}

TEST(Extractor, EvalForwardIsPure) {
  Rng rng(50);
  FeatureExtractor<float> f(tiny_arch(), {}, rng);
  f.forward(random_images(8, 1, 8, 51), Mode::train);
  const auto x = random_images(5, 1, 8, 52);
  const auto before = buffer_checksum(f.buffers());
  const auto a = forward_features(f, x, Mode::eval);
  const auto b = forward_features(f, x, Mode::eval);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(buffer_checksum(f.buffers()), before);
  EXPECT_EQ(a.embeddings.shape(), (Shape{5, 6}));
}

TEST(Extractor, TrainForwardWithoutUpdateChangesOnlyBnState) {
  Rng rng(53);
  FeatureExtractor<float> f(tiny_arch(), {}, rng);
  const auto params = parameter_checksum(f.parameters());
  const auto buffers = buffer_checksum(f.buffers());
  const float mean_before = f.batch_norms().front()->running_mean()[0];
  f.forward(random_images(8, 1, 8, 54), Mode::train);
  EXPECT_EQ(parameter_checksum(f.parameters()), params);
  EXPECT_NE(buffer_checksum(f.buffers()), buffers);
  EXPECT_NE(f.batch_norms().front()->running_mean()[0], mean_before);
}

TEST(Extractor, ChannelMismatchIsShapeError) {
  Rng rng(55);
  FeatureExtractor<float> f(tiny_arch(), {}, rng);
  EXPECT_THROW(f.forward(random_images(2, 3, 8, 56), Mode::eval), ShapeError);
}

TEST(Extractor, HasBatchNormLayersAndNamedParameters) {
  Rng rng(57);
  FeatureExtractor<float> f(tiny_arch(), {}, rng);
  EXPECT_GE(f.batch_norms().size(), 1u);
  const auto params = f.parameters();
  EXPECT_EQ(params.front()->name, "stem.conv.weight");
  EXPECT_EQ(params.back()->name, "head.bias");
}

TEST(Extractor, Resnet18LayoutIsReachable) {
  ArchitectureConfig a;
  a.in_channels = 3;
  a.widths = {64, 128, 256, 512};
  a.blocks_per_stage = 2;
  a.embedding_dim = 512;
  Rng rng(58);
  FeatureExtractor<float> f(a, {}, rng);
  std::size_t convs = 0;
  for (auto* p : f.parameters())
    if (p->value.rank() == 4 && p->value.dim(2) == 3) ++convs;
  EXPECT_EQ(convs, 17u);  // stem + 16 in blocks
}

TEST(Classifier, ZeroWeightsGiveZeroLogits) {
  Rng rng(60);
  ClassifierHead<double> g(4, 3, rng);
  g.weight().fill(0);
  g.bias().fill(0);
  const auto logits = forward_logits(g, FeatureBatch<double>{random_tensor({5, 4}, 61)});
  for (double v : logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Classifier, IdentityWeightCopiesOneHotFeature) {
  Rng rng(62);
  ClassifierHead<double> g(3, 3, rng);
  g.weight() = Tensor<double>({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  g.bias().fill(0);
  Tensor<double> x({1, 3}, std::vector<double>{0, 1, 0});
  EXPECT_EQ(g.forward(x).storage(), x.storage());
}

TEST(Classifier, DimensionMismatchThrows) {
  Rng rng(63);
  ClassifierHead<double> g(4, 3, rng);
  EXPECT_THROW(g.forward(Tensor<double>({2, 5})), ShapeError);
  EXPECT_EQ(g.forward(Tensor<double>({7, 4})).shape(), (Shape{7, 3}));
}

TEST(Covariance, DiagonalInputGivesIdentity) {
  // rows chosen so the sample covariance is exactly diagonal
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, -1, 2, 1, -2, -1, -2;
  const auto r = bn_covariance_report(x);
  EXPECT_LT((r.sigma_bn - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(r.eigvals(0), 4.0, 1e-12);
  EXPECT_NEAR(r.eigvals(1), 1.0, 1e-12);
}

TEST(Covariance, UnitDiagonalForArbitraryInput) {
  const auto t = random_tensor({50, 6}, 70, 5.0);
  Eigen::MatrixXd x = to_matrix(t);
  x.col(2) = 3.0 * x.col(0) + 0.1 * x.col(2);
  const auto r = bn_covariance_report(x);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(r.sigma_bn(i, i), 1.0, 1e-6);
  EXPECT_GE(r.eigvals.minCoeff(), -1e-8);
  EXPECT_LT((r.sigma - r.sigma.transpose()).norm(), 1e-12);
}

TEST(Covariance, OffDiagonalEqualsCorrelation) {
  Rng rng(71);
  const double rho = 0.6;
  Eigen::MatrixXd x(5000, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double a = rng.normal(), b = rng.normal();
    x(i, 0) = 2.0 * a;
    x(i, 1) = 0.5 * (rho * a + std::sqrt(1 - rho * rho) * b);
  }
  const auto r = bn_covariance_report(x);
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const double sample_rho = c.col(0).dot(c.col(1)) / (c.col(0).norm() * c.col(1).norm());
  EXPECT_NEAR(r.sigma_bn(0, 1), sample_rho, 1e-12);
}

TEST(Covariance, RejectsSingleRow) { EXPECT_THROW(bn_covariance_report(Eigen::MatrixXd::Ones(1, 3)), ParameterError); }

TEST(Optim, CosineScheduleEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 1e-4, 0, 300), 0.1);
  EXPECT_NEAR(cosine_lr(0.1, 1e-4, 150, 300), 0.5 * (0.1 + 1e-4), 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 1e-4, 300, 300), 1e-4);
}

TEST(Optim, AdamWFirstStepMovesByLr) {
  Parameter<double> p("w", Tensor<double>({1}, 1.0));
  p.grad[0] = 5.0;
  AdamW<double> opt({&p}, 1e-3, 0.0);
  opt.step();
  EXPECT_NEAR(p.value[0], 1.0 - 1e-3, 1e-9);
}

TEST(Optim, SgdMomentumWithDecay) {
  Parameter<double> p("w", Tensor<double>({1}, 1.0));
  Sgd<double> opt({&p}, 0.1, 0.9, 0.01);
  p.grad[0] = 1.0;
  opt.step();  // v = 1.01
  EXPECT_NEAR(p.value[0], 1.0 - 0.101, 1e-12);
  opt.step();  // v = 0.9*1.01 + 1 + 0.01*0.899
  EXPECT_NEAR(p.value[0], 0.899 - 0.1 * (0.909 + 1.0 + 0.00899), 1e-12);
}

TEST(Checkpoint, RoundTripIsExactAndByteStable) {
  const auto dir = std::filesystem::temp_directory_path() / "dafr2_test_ckpt";
  std::filesystem::remove_all(dir);
  auto bundle = make_bundle<float>(tiny_arch(), 4, Normalization{{0.3f}, {0.2f}}, 5, true);
  bundle.f_s.forward(random_images(4, 1, 8, 80), Mode::train);
  save_checkpoint(bundle, dir / "a", {3, "dafr2"});
  CheckpointInfo info;
  auto loaded = load_checkpoint<float>(dir / "a", &info);
  EXPECT_EQ(info.step, 3u);
  EXPECT_EQ(info.mode, "dafr2");
  EXPECT_EQ(parameter_checksum(loaded.f_s.parameters()), parameter_checksum(bundle.f_s.parameters()));
  EXPECT_EQ(buffer_checksum(loaded.f_s.buffers()), buffer_checksum(bundle.f_s.buffers()));
  EXPECT_EQ(parameter_checksum(loaded.f_t->parameters()), parameter_checksum(bundle.f_t->parameters()));
  EXPECT_EQ(parameter_checksum(loaded.g_s.parameters()), parameter_checksum(bundle.g_s.parameters()));
  EXPECT_EQ(loaded.f_s.normalization(), bundle.f_s.normalization());
  save_checkpoint(loaded, dir / "b", {3, "dafr2"});
  for (const auto& e : std::filesystem::directory_iterator(dir / "a"))
    EXPECT_EQ(io::read_bytes(e.path()), io::read_bytes(dir / "b" / e.path().filename())) << e.path();
  std::filesystem::remove_all(dir);
}
