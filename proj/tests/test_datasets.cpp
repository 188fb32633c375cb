#include <gtest/gtest.h>

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "dafr2/datasets/idx.hpp"
#include "dafr2/datasets/storage.hpp"
#include "dafr2/datasets/synth_shapes.hpp"

using namespace dafr2;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dafr2_ds_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<unsigned char> b;
  put_be32(b, 0x803);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<unsigned char>((i * 37) % 256));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t n) {
  std::vector<unsigned char> b;
  put_be32(b, 0x801);
  put_be32(b, n);
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

}  // namespace

TEST(Idx, LabeledAndUnlabeledLoads) {
  const auto dir = scratch("idx");
  io::write_bytes(dir / "img", idx_images(12, 28, 28));
  io::write_bytes(dir / "lbl", idx_labels(12));
  auto labeled = std::get<LabeledDataset>(load_idx(dir / "img", dir / "lbl"));
  EXPECT_EQ(labeled.images.shape(), (Shape{12, 1, 28, 28}));
  EXPECT_EQ(labeled.num_classes, 10u);
  EXPECT_FLOAT_EQ(labeled.images[1], 37.0f / 255.0f);
  validate(labeled);
  EXPECT_TRUE(std::holds_alternative<UnlabeledDataset>(load_idx(dir / "img")));
}

TEST(Idx, GzipIsTransparent) {
  const auto dir = scratch("idxgz");
  const auto raw = idx_images(3, 4, 5);
  gzFile f = gzopen((dir / "img.gz").c_str(), "wb");
  gzwrite(f, raw.data(), static_cast<unsigned>(raw.size()));
  gzclose(f);
  io::write_bytes(dir / "img", raw);
  EXPECT_EQ(std::get<UnlabeledDataset>(load_idx(dir / "img.gz")).images,
            std::get<UnlabeledDataset>(load_idx(dir / "img")).images);
}

TEST(Idx, FormatErrorsNameOffsets) {
  const auto dir = scratch("idxbad");
  auto bad_magic = idx_images(2, 4, 4);
  bad_magic[3] = 0x02;
  io::write_bytes(dir / "magic", bad_magic);
  try {
    load_idx(dir / "magic");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  auto truncated = idx_images(2, 4, 4);
  truncated.resize(20);
  io::write_bytes(dir / "trunc", truncated);
  EXPECT_THROW(load_idx(dir / "trunc"), FormatError);

  io::write_bytes(dir / "short", std::vector<unsigned char>{0x00, 0x00, 0x08});
  EXPECT_THROW(load_idx(dir / "short"), FormatError);

  auto zero_dim = idx_images(2, 0, 4);
  io::write_bytes(dir / "zero", zero_dim);
  try {
    load_idx(dir / "zero");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
}

TEST(Idx, CountMismatchIsConsistencyError) {
  const auto dir = scratch("idxcount");
  io::write_bytes(dir / "img", idx_images(5, 2, 2));
  io::write_bytes(dir / "lbl", idx_labels(4));
  EXPECT_THROW(load_idx(dir / "img", dir / "lbl"), ConsistencyError);
}

TEST(SynthShapes, DeterministicForSeed) {
  const auto a = synth_shapes(100, 7, 28), b = synth_shapes(100, 7, 28);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(synth_shapes(100, 8, 28).images, a.images);
  validate(a);
}

TEST(SynthShapes, ClassHistogramIsBalanced) {
  const auto ds = synth_shapes(4000, 3, 8);
  std::array<std::size_t, 4> counts{};
  for (auto y : ds.labels) ++counts.at(static_cast<std::size_t>(y));
  for (auto c : counts) {
    EXPECT_GE(c, 750u);
    EXPECT_LE(c, 1250u);
  }
}

TEST(SynthShapes, RejectsBadArguments) {
  EXPECT_THROW(synth_shapes(0, 1, 28), ParameterError);
  EXPECT_THROW(synth_shapes(10, 1, 7), ParameterError);
}

TEST(Split, IdentityAndHalves) {
  const auto ds = synth_shapes(100, 1, 8);
  const auto whole = split(ds, {1.0}, 5);
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0].size(), 100u);
  std::multiset<std::int64_t> a(ds.labels.begin(), ds.labels.end()), b(whole[0].labels.begin(), whole[0].labels.end());
  EXPECT_EQ(a, b);

  const auto parts = split_indices(100, {0.5, 0.5}, 9);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].size(), 50u);
  EXPECT_EQ(parts[1].size(), 50u);
  std::set<std::size_t> all(parts[0].begin(), parts[0].end());
  all.insert(parts[1].begin(), parts[1].end());
  EXPECT_EQ(all.size(), 100u);
}

TEST(Split, DeterministicAndValidated) {
  EXPECT_EQ(split_indices(57, {0.9, 0.1}, 3), split_indices(57, {0.9, 0.1}, 3));
  EXPECT_THROW(split_indices(10, {0.5, 0.4}, 1), ParameterError);
  EXPECT_THROW(split_indices(3, {0.99, 0.01}, 1), ParameterError);
}

TEST(Batching, EveryIndexOncePerEpoch) {
  BatchPlan plan{7, 11, false};
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::vector<std::size_t> seen;
    for (const auto& b : epoch_batches(50, plan, epoch)) seen.insert(seen.end(), b.begin(), b.end());
    std::sort(seen.begin(), seen.end());
    ASSERT_EQ(seen.size(), 50u);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(seen[i], i);
  }
  EXPECT_EQ(epoch_batches(50, plan, 1), epoch_batches(50, plan, 1));
  EXPECT_NE(epoch_batches(50, plan, 1), epoch_batches(50, plan, 2));
  plan.drop_last = true;
  EXPECT_EQ(epoch_batches(50, plan, 0).size(), 7u);
}

TEST(Storage, RoundTripIsBitExact) {
  const auto dir = scratch("store");
  auto ds = synth_shapes(37, 4, 12);
  ds.provenance = "natural";
  save_dataset(ds, dir / "lab");
  const auto back = load_labeled_dataset(dir / "lab");
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.normalization, ds.normalization);
  EXPECT_EQ(back.num_classes, ds.num_classes);

  auto un = as_unlabeled(ds);
  un.reference_labels.reset();
  save_dataset(un, dir / "unl");
  const auto un_back = load_unlabeled_dataset(dir / "unl");
  EXPECT_EQ(un_back.images, un.images);
  EXPECT_FALSE(un_back.reference_labels.has_value());
  EXPECT_THROW(load_labeled_dataset(dir / "unl"), ParameterError);
}

TEST(Storage, ChecksumMismatchDetected) {
  const auto dir = scratch("storebad");
  save_dataset(synth_shapes(5, 4, 8), dir);
  auto bytes = io::read_bytes(dir / "images.bin");
  bytes[10] ^= 0x40;
  io::write_bytes(dir / "images.bin", bytes);
  EXPECT_THROW(load_labeled_dataset(dir), ConsistencyError);
}

TEST(Validation, RejectsOutOfRangeLabelsAndPixels) {
  auto ds = synth_shapes(5, 4, 8);
  ds.labels[2] = 4;
  EXPECT_THROW(validate(ds), ParameterError);
  ds = synth_shapes(5, 4, 8);
  ds.images[0] = 1.5f;
  EXPECT_THROW(validate(ds), ParameterError);
}
