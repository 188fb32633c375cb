#pragma once

#include <zlib.h>

#include <filesystem>
#include <optional>
#include <variant>

#include "dafr2/core/io.hpp"
#include "dafr2/datasets/dataset.hpp"

namespace dafr2 {

namespace detail {

inline std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  if (path.extension() != ".gz") return io::read_bytes(path);
  if (!std::filesystem::exists(path)) throw ParameterError("cannot open " + path.string());
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (!file) throw ParameterError("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char buffer[1 << 16];
  int got = 0;
  while ((got = gzread(file, buffer, sizeof(buffer))) > 0) out.insert(out.end(), buffer, buffer + got);
  const bool failed = got < 0;
  gzclose(file);
  if (failed) throw FormatError("corrupt gzip stream in " + path.string(), out.size());
  return out;
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image file (and optionally its label file). Pixels are scaled
/// from [0,255] to [0,1]. Files ending in .gz are decompressed transparently.
inline std::variant<LabeledDataset, UnlabeledDataset> load_idx(const std::filesystem::path& images_path,
                                                                const std::optional<std::filesystem::path>& labels_path = {}) {
  const auto bytes = detail::read_maybe_gzip(images_path);
  const std::uint32_t magic = io::read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) throw FormatError("bad IDX image magic in " + images_path.string(), 0);
  const std::size_t n = io::read_be32(bytes, 4);
  const std::size_t rows = io::read_be32(bytes, 8);
  const std::size_t cols = io::read_be32(bytes, 12);
  if (rows == 0 || cols == 0) throw FormatError("zero image dimension in " + images_path.string(), 8);
  const std::size_t expected = 16 + n * rows * cols;
  if (bytes.size() < expected)
    throw FormatError("truncated IDX image payload in " + images_path.string(), bytes.size());
  if (bytes.size() > expected) throw FormatError("trailing bytes in " + images_path.string(), expected);

  Tensor<float> images({n, 1, rows, cols});
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  const std::string name = images_path.stem().string();

  if (!labels_path) return UnlabeledDataset{std::move(images), name, "natural", std::nullopt, 0};

  const auto label_bytes = detail::read_maybe_gzip(*labels_path);
  if (io::read_be32(label_bytes, 0) != kIdxLabelsMagic)
    throw FormatError("bad IDX label magic in " + labels_path->string(), 0);
  const std::size_t n_labels = io::read_be32(label_bytes, 4);
  if (label_bytes.size() != 8 + n_labels)
    throw FormatError("label payload size disagrees with header in " + labels_path->string(),
                      std::min(label_bytes.size(), 8 + n_labels));
  if (n_labels != n)
    throw ConsistencyError("IDX image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));

  LabeledDataset ds;
  ds.images = std::move(images);
  ds.name = name;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = label_bytes[8 + i];
    ds.num_classes = std::max<std::size_t>(ds.num_classes, static_cast<std::size_t>(ds.labels[i]) + 1);
  }
  ds.normalization = compute_normalization(ds.images);
  return ds;
}

}  // namespace dafr2
