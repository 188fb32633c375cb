#pragma once

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "dafr2/core/io.hpp"
#include "dafr2/datasets/dataset.hpp"

namespace dafr2 {

// Repo-native dataset directory:
//   manifest.json  shape, dtype, name, provenance, checksums, normalization
//   images.bin     float32 little-endian, [n,c,h,w]
//   labels.bin     int64 little-endian, [n]   (only when labels exist)

namespace detail {

inline void write_dataset_dir(const std::filesystem::path& dir, const Tensor<float>& images,
                              const std::vector<std::int64_t>* labels, const std::string& role, std::size_t num_classes,
                              const std::string& name, const std::string& provenance, const Normalization& norm) {
  std::filesystem::create_directories(dir);
  const auto image_bytes = io::as_bytes(images.values());
  io::write_bytes(dir / "images.bin", image_bytes);

  nlohmann::json manifest;
  manifest["format"] = "dafr2-dataset";
  manifest["version"] = 1;
  manifest["role"] = role;
  manifest["name"] = name;
  manifest["provenance"] = provenance;
  manifest["shape"] = images.shape();
  manifest["dtype"] = "float32";
  manifest["num_classes"] = num_classes;
  manifest["checksum"]["images.bin"] = io::crc32_hex(image_bytes);
  if (!norm.empty()) manifest["normalization"] = {{"mean", norm.mean}, {"std", norm.stddev}};
  if (labels) {
    const auto label_bytes = io::as_bytes(std::span<const std::int64_t>(*labels));
    io::write_bytes(dir / "labels.bin", label_bytes);
    manifest["labels_dtype"] = "int64";
    manifest["checksum"]["labels.bin"] = io::crc32_hex(label_bytes);
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

struct RawDataset {
  nlohmann::json manifest;
  Tensor<float> images;
  std::optional<std::vector<std::int64_t>> labels;
};

inline RawDataset read_dataset_dir(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw ParameterError("no manifest.json in " + dir.string());
  RawDataset raw;
  try {
    raw.manifest = nlohmann::json::parse(std::ifstream(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest.json: " + std::string(e.what()), e.byte);
  }
  if (raw.manifest.value("format", "") != "dafr2-dataset") throw FormatError("not a dafr2 dataset manifest", 0);
  const auto shape = raw.manifest.at("shape").get<Shape>();
  const auto image_bytes = io::read_bytes(dir / "images.bin");
  if (image_bytes.size() != shape_size(shape) * sizeof(float))
    throw FormatError("images.bin size disagrees with manifest shape", image_bytes.size());
  if (io::crc32_hex(image_bytes) != raw.manifest.at("checksum").at("images.bin").get<std::string>())
    throw ConsistencyError("images.bin checksum mismatch in " + dir.string());
  raw.images = Tensor<float>(shape, io::from_bytes<float>(image_bytes, "images.bin"));

  if (std::filesystem::exists(dir / "labels.bin")) {
    const auto label_bytes = io::read_bytes(dir / "labels.bin");
    if (io::crc32_hex(label_bytes) != raw.manifest.at("checksum").value("labels.bin", ""))
      throw ConsistencyError("labels.bin checksum mismatch in " + dir.string());
    raw.labels = io::from_bytes<std::int64_t>(label_bytes, "labels.bin");
    if (raw.labels->size() != shape.at(0)) throw ConsistencyError("label count does not match image count");
  }
  return raw;
}

inline Normalization manifest_normalization(const nlohmann::json& manifest) {
  Normalization norm;
  if (manifest.contains("normalization")) {
    norm.mean = manifest["normalization"].at("mean").get<std::vector<float>>();
    norm.stddev = manifest["normalization"].at("std").get<std::vector<float>>();
  }
  return norm;
}

}  // namespace detail

inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
  validate(ds);
  detail::write_dataset_dir(dir, ds.images, &ds.labels, "labeled", ds.num_classes, ds.name, ds.provenance,
                            ds.normalization);
}

inline void save_dataset(const UnlabeledDataset& ds, const std::filesystem::path& dir) {
  validate(ds);
  detail::write_dataset_dir(dir, ds.images, ds.reference_labels ? &*ds.reference_labels : nullptr, "unlabeled",
                            ds.num_classes, ds.name, ds.provenance, {});
}

/// Loads a dataset that must carry labels (a source set, or a target set with
/// evaluation labels).
inline LabeledDataset load_labeled_dataset(const std::filesystem::path& dir) {
  auto raw = detail::read_dataset_dir(dir);
  if (!raw.labels) throw ParameterError(dir.string() + ": dataset has no labels");
  LabeledDataset ds;
  ds.images = std::move(raw.images);
  ds.labels = std::move(*raw.labels);
  ds.num_classes = raw.manifest.value("num_classes", std::size_t{0});
  ds.name = raw.manifest.value("name", "");
  ds.provenance = raw.manifest.value("provenance", "natural");
  ds.normalization = detail::manifest_normalization(raw.manifest);
  validate(ds);
  return ds;
}

inline UnlabeledDataset load_unlabeled_dataset(const std::filesystem::path& dir) {
  auto raw = detail::read_dataset_dir(dir);
  UnlabeledDataset ds;
  ds.images = std::move(raw.images);
  ds.name = raw.manifest.value("name", "");
  ds.provenance = raw.manifest.value("provenance", "natural");
  ds.num_classes = raw.manifest.value("num_classes", std::size_t{0});
  ds.reference_labels = std::move(raw.labels);
  validate(ds);
  return ds;
}

}  // namespace dafr2
