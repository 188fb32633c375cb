#pragma once

#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

#include "dafr2/nn/model.hpp"

namespace dafr2::nn {

// Checkpoint directory: manifest.json + one raw little-endian float32 file per
// parameter and BN buffer, named "<network>.<tensor path>.f32".

inline nlohmann::json architecture_json(const ArchitectureConfig& a) {
  return {{"in_channels", a.in_channels}, {"widths", a.widths},     {"blocks_per_stage", a.blocks_per_stage},
          {"embedding_dim", a.embedding_dim}, {"bn_momentum", a.bn_momentum}, {"bn_eps", a.bn_eps}};
}

inline ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  a.in_channels = j.at("in_channels").get<std::size_t>();
  a.widths = j.at("widths").get<std::vector<std::size_t>>();
  a.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
  a.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  a.bn_momentum = j.at("bn_momentum").get<double>();
  a.bn_eps = j.at("bn_eps").get<double>();
  return a;
}

struct CheckpointInfo {
  std::size_t step = 0;
  std::string mode;  // "baseline" or "dafr2"
};

namespace detail {

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_tensors(ModelBundle<T>& bundle) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  auto add_extractor = [&](const std::string& net, FeatureExtractor<T>& f) {
    for (auto* p : f.parameters()) out.emplace_back(net + "." + p->name, &p->value);
    for (auto& b : f.buffers()) out.emplace_back(net + "." + b.name, b.value);
  };
  add_extractor("f_s", bundle.f_s);
  for (auto* p : bundle.g_s.parameters()) out.emplace_back("g_s." + p->name, &p->value);
  if (bundle.f_t) add_extractor("f_t", *bundle.f_t);
  return out;
}

}  // namespace detail

template <typename T>
void save_checkpoint(ModelBundle<T>& bundle, const std::filesystem::path& dir, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "dafr2-checkpoint";
  manifest["version"] = 1;
  manifest["architecture"] = architecture_json(bundle.f_s.config());
  manifest["num_classes"] = bundle.num_classes;
  manifest["normalization"] = {{"mean", bundle.f_s.normalization().mean}, {"std", bundle.f_s.normalization().stddev}};
  manifest["step"] = info.step;
  manifest["mode"] = info.mode;
  manifest["has_f_t"] = bundle.f_t.has_value();
  nlohmann::json tensors = nlohmann::json::array();
  for (auto& [name, t] : detail::named_tensors(bundle)) {
    const Tensor<float> f = t->template cast<float>();
    const auto bytes = io::as_bytes(f.values());
    const std::string file = name + ".f32";
    io::write_bytes(dir / file, bytes);
    tensors.push_back({{"name", name}, {"shape", t->shape()}, {"file", file}, {"crc32", io::crc32_hex(bytes)}});
  }
  manifest["tensors"] = tensors;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

template <typename T>
ModelBundle<T> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw ParameterError("no checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(std::ifstream(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()), e.byte);
  }
  if (manifest.value("format", "") != "dafr2-checkpoint") throw FormatError("not a dafr2 checkpoint", 0);
  const auto arch = architecture_from_json(manifest.at("architecture"));
  Normalization norm{manifest.at("normalization").at("mean").get<std::vector<float>>(),
                     manifest.at("normalization").at("std").get<std::vector<float>>()};
  auto bundle = make_bundle<T>(arch, manifest.at("num_classes").get<std::size_t>(), norm, 0,
                               manifest.value("has_f_t", false));

  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = e;
  for (auto& [name, t] : detail::named_tensors(bundle)) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw ConsistencyError("checkpoint is missing tensor " + name);
    const nlohmann::json& entry = it->second;
    if (entry.at("shape").get<Shape>() != t->shape()) throw ShapeError("checkpoint tensor " + name + " has the wrong shape");
    const auto bytes = io::read_bytes(dir / entry.at("file").get<std::string>());
    if (io::crc32_hex(bytes) != entry.at("crc32").get<std::string>())
      throw ConsistencyError("checksum mismatch for checkpoint tensor " + name);
    const auto values = io::from_bytes<float>(bytes, name);
    if (values.size() != t->size()) throw FormatError(name + ": wrong element count", bytes.size());
    for (std::size_t i = 0; i < values.size(); ++i) (*t)[i] = static_cast<T>(values[i]);
  }
  if (info) *info = {manifest.value("step", std::size_t{0}), manifest.value("mode", std::string{})};
  return bundle;
}

}  // namespace dafr2::nn
