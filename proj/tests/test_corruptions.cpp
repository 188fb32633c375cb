#include <gtest/gtest.h>

#include "dafr2/corruptions/corruption.hpp"
#include "dafr2/datasets/synth_shapes.hpp"

using namespace dafr2;

namespace {

std::vector<CorruptionKind> implemented_kinds() {
  std::vector<CorruptionKind> out;
  for (const auto& [kind, name] : kCorruptionNames)
    if (kind_implemented(kind)) out.push_back(kind);
  return out;
}

double image_mean(const Tensor<float>& t, std::size_t i) {
  double s = 0;
  for (float v : t.row(i)) s += v;
  return s / static_cast<double>(t.stride0());
}

}  // namespace

TEST(SeverityTable, GaussianNoiseDefaults) {
  const auto& t = severity_table(CorruptionKind::gaussian_noise);
  const double expected[] = {0.04, 0.06, 0.08, 0.09, 0.10};
  for (int s = 0; s < 5; ++s) EXPECT_DOUBLE_EQ(t.levels[static_cast<std::size_t>(s)][0], expected[s]);
}

TEST(SeverityTable, PrimaryParameterIsStrictlyMonotone) {
  for (auto kind : implemented_kinds()) {
    const auto& t = severity_table(kind);
    for (std::size_t s = 1; s < 5; ++s) {
      if (t.direction == Destructive::increasing)
        EXPECT_GT(t.levels[s][0], t.levels[s - 1][0]) << kind_name(kind) << " severity " << s + 1;
      else
        EXPECT_LT(t.levels[s][0], t.levels[s - 1][0]) << kind_name(kind) << " severity " << s + 1;
    }
  }
}

TEST(SeverityTable, RotateBoundsIncrease) {
  const auto& t = severity_table(CorruptionKind::rotate);
  for (std::size_t s = 1; s < 5; ++s) EXPECT_GT(t.levels[s][0], t.levels[s - 1][0]);
}

TEST(Kinds, UnknownAndUnimplemented) {
  EXPECT_THROW(parse_kind("glitter"), ParameterError);
  EXPECT_THROW(severity_table(CorruptionKind::snow), NotImplementedError);
  const auto ds = synth_shapes(2, 1, 16);
  EXPECT_THROW(corrupt(ds, {CorruptionKind::frost, 1, 0}), NotImplementedError);
  EXPECT_EQ(parse_kind("gaussian_noise"), CorruptionKind::gaussian_noise);
  EXPECT_EQ(implemented_kinds().size(), 22u);
}

TEST(Kinds, SeverityOutOfRange) {
  const auto ds = synth_shapes(2, 1, 16);
  EXPECT_THROW(corrupt(ds, {CorruptionKind::brightness, 0, 0}), ParameterError);
  EXPECT_THROW(corrupt(ds, {CorruptionKind::brightness, 6, 0}), ParameterError);
}

TEST(Corrupt, ZeroNoiseIsIdentity) {
  const auto ds = synth_shapes(10, 2, 16);
  EXPECT_EQ(corrupt_images(ds.images, CorruptionKind::gaussian_noise, {0.0, 0, 0}, 5), ds.images);
}

TEST(Corrupt, ZeroTranslateIsIdentity) {
  const auto ds = synth_shapes(10, 2, 16);
  EXPECT_EQ(corrupt_images(ds.images, CorruptionKind::translate, {0.0, 0, 0}, 5), ds.images);
}

TEST(Corrupt, ImpulseWithCertainProbabilitySaturates) {
  const auto ds = synth_shapes(10, 2, 16);
  const auto out = corrupt_images(ds.images, CorruptionKind::impulse_noise, {1.0, 0, 0}, 5);
  for (float v : out.values()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(Corrupt, BrightnessShiftsImageMeanByDelta) {
  const auto ds = synth_shapes(100, 3, 16);
  for (int s = 1; s <= 5; ++s) {
    const auto params = severity_params(CorruptionKind::brightness, s);
    const auto out = corrupt_images_unclipped(ds.images, CorruptionKind::brightness, params, 9);
    for (std::size_t i = 0; i < 100; ++i)
      EXPECT_NEAR(image_mean(out, i) - image_mean(ds.images, i), params[0], 1e-6) << "severity " << s;
  }
}

TEST(Corrupt, PureFunctionOfInputAndSpec) {
  const auto ds = synth_shapes(20, 4, 16);
  for (auto kind : implemented_kinds()) {
    const CorruptionSpec spec{kind, 3, 42};
    const auto a = corrupt(ds, spec), b = corrupt(ds, spec);
    EXPECT_EQ(a.images, b.images) << kind_name(kind);
  }
}

TEST(Corrupt, PerImageStreamsMakeSubsetsConsistent) {
  // image i depends only on (seed, i): corrupting a prefix matches the prefix of the full run
  const auto ds = synth_shapes(20, 4, 16);
  std::vector<std::size_t> first(8);
  std::iota(first.begin(), first.end(), 0);
  const auto full = corrupt(ds, {CorruptionKind::glass_blur, 4, 1});
  const auto part = corrupt(subset(ds, first), {CorruptionKind::glass_blur, 4, 1});
  for (std::size_t i = 0; i < 8; ++i)
    EXPECT_TRUE(std::equal(part.images.row(i).begin(), part.images.row(i).end(), full.images.row(i).begin()));
}

TEST(Corrupt, AllKindsProduceValidChangedOutput) {
  const auto ds = synth_shapes(12, 5, 16);
  for (auto kind : implemented_kinds())
    for (int s = 1; s <= 5; ++s) {
      const auto out = corrupt(ds, {kind, s, 3});
      ASSERT_EQ(out.images.shape(), ds.images.shape());
      for (float v : out.images.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f) << kind_name(kind);
      EXPECT_NE(out.images, ds.images) << kind_name(kind) << " severity " << s;
    }
}

TEST(Corrupt, PreservesOrderAndCarriesProvenance) {
  const auto ds = synth_shapes(15, 6, 16);
  const CorruptionSpec spec{CorruptionKind::rotate, 2, 77};
  const auto out = corrupt(ds, spec);
  ASSERT_TRUE(out.reference_labels.has_value());
  EXPECT_EQ(*out.reference_labels, ds.labels);
  EXPECT_EQ(out.provenance, "rotate;severity=2;seed=77;tables=v1");
  const auto parsed = parse_provenance(out.provenance);
  ASSERT_TRUE(parsed.has_value());
  EXPECT_EQ(parsed->kind, spec.kind);
  EXPECT_EQ(parsed->severity, 2);
  EXPECT_EQ(parsed->seed, 77u);
  EXPECT_FALSE(parse_provenance("natural").has_value());
}

TEST(Corrupt, DestructivenessGrowsWithSeverityOnAverage) {
  // mean absolute pixel change should not shrink as severity rises
  const auto ds = synth_shapes(60, 8, 16);
  for (auto kind : {CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise, CorruptionKind::gaussian_blur,
                    CorruptionKind::contrast, CorruptionKind::brightness}) {
    double prev = 0.0;
    for (int s = 1; s <= 5; ++s) {
      const auto out = corrupt(ds, {kind, s, 1});
      double change = 0;
      for (std::size_t i = 0; i < out.images.size(); ++i) change += std::abs(out.images[i] - ds.images[i]);
      EXPECT_GE(change, prev) << kind_name(kind) << " severity " << s;
      prev = change;
    }
  }
}
