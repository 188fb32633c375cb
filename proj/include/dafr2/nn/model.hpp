#pragma once

#include <optional>

#include "dafr2/core/io.hpp"
#include "dafr2/datasets/dataset.hpp"
#include "dafr2/nn/layers.hpp"

namespace dafr2::nn {

/// Backbone shape. Stage i has `widths[i]` channels and `blocks_per_stage`
/// residual blocks; every stage after the first halves the resolution.
/// widths {64,128,256,512} with 2 blocks and embedding_dim 512 gives the
/// CIFAR-style ResNet18 layout.
struct ArchitectureConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> widths = {16, 32, 64, 128};
  std::size_t blocks_per_stage = 1;
  std::size_t embedding_dim = 128;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Snapshot of one BN layer's state.
template <typename T>
struct BNState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum;
  double eps;
  Tensor<T> gamma;
  Tensor<T> beta;
};

enum class ExtractorTag { f_s, f_t };
enum class DomainTag { source, target };

/// Embeddings [m, d] produced by one extractor on one domain.
template <typename T>
struct FeatureBatch {
  Tensor<T> embeddings;
  ExtractorTag extractor = ExtractorTag::f_s;
  DomainTag domain = DomainTag::source;

  std::size_t rows() const { return embeddings.dim(0); }
  std::size_t dim() const { return embeddings.dim(1); }
};

/// Convolutional backbone + global average pool + a linear head whose output
/// is the distillation embedding. Includes the model-side input normalisation.
template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor(const ArchitectureConfig& config, Normalization normalization, Rng& rng)
      : config_(config), normalization_(std::move(normalization)) {
    if (config.widths.empty()) throw ParameterError("architecture needs at least one stage");
    if (config.blocks_per_stage == 0 || config.embedding_dim == 0) throw ParameterError("architecture sizes must be positive");
    if (normalization_.empty()) {
      normalization_.mean.assign(config.in_channels, 0.0f);
      normalization_.stddev.assign(config.in_channels, 1.0f);
    }
    if (normalization_.mean.size() != config.in_channels) throw ParameterError("normalisation channel count mismatch");

    Sequential<T> stem;
    stem.add("conv", std::make_unique<Conv2d<T>>(config.in_channels, config.widths[0], 3, 1, 1, false, rng))
        .add("bn", std::make_unique<BatchNorm<T>>(config.widths[0], config.bn_momentum, config.bn_eps))
        .add("relu", std::make_unique<ReLU<T>>());
    body_.add("stem", std::make_unique<Sequential<T>>(std::move(stem)));
    std::size_t channels = config.widths[0];
    for (std::size_t s = 0; s < config.widths.size(); ++s) {
      for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        body_.add("stage" + std::to_string(s + 1) + ".block" + std::to_string(b),
                  std::make_unique<BasicBlock<T>>(channels, config.widths[s], stride, config.bn_momentum, config.bn_eps, rng));
        channels = config.widths[s];
      }
    }
    body_.add("pool", std::make_unique<GlobalAvgPool<T>>());
    body_.add("head", std::make_unique<Linear<T>>(channels, config.embedding_dim, rng));
  }

  const ArchitectureConfig& config() const { return config_; }
  const Normalization& normalization() const { return normalization_; }
  void set_normalization(Normalization n) { normalization_ = std::move(n); }
  std::size_t embedding_dim() const { return config_.embedding_dim; }

  /// Pixel-space [0,1] images -> normalised model input.
  Tensor<T> normalize(const Tensor<float>& images) const {
    if (images.rank() != 4 || images.dim(1) != config_.in_channels)
      throw ShapeError("feature extractor: expected [m," + std::to_string(config_.in_channels) + ",h,w] images, got " +
                       shape_string(images.shape()));
    Tensor<T> x(images.shape());
    const std::size_t n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double mean = normalization_.mean[ch], inv = 1.0 / normalization_.stddev[ch];
        const std::size_t base = (i * c + ch) * hw;
        for (std::size_t s = 0; s < hw; ++s) x[base + s] = static_cast<T>((images[base + s] - mean) * inv);
      }
    return x;
  }

  Tensor<T> forward(const Tensor<float>& images, Mode mode) { return forward_normalized(normalize(images), mode); }

  /// Input already in normalised space (used for Gaussian probing).
  Tensor<T> forward_normalized(const Tensor<T>& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != config_.in_channels)
      throw ShapeError("feature extractor: channel mismatch, got " + shape_string(x.shape()));
    return body_.forward(x, mode);
  }

  /// Gradient w.r.t. the normalised input of the last forward.
  Tensor<T> backward(const Tensor<T>& grad_embeddings) { return body_.backward(grad_embeddings); }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    body_.collect_parameters("", out);
    return out;
  }
  std::vector<BufferRef<T>> buffers() {
    std::vector<BufferRef<T>> out;
    body_.collect_buffers("", out);
    return out;
  }
  std::vector<BatchNorm<T>*> batch_norms() {
    std::vector<BatchNorm<T>*> out;
    body_.collect_batch_norms(out);
    return out;
  }

  std::vector<BNState<T>> bn_states() {
    std::vector<BNState<T>> out;
    for (auto* bn : batch_norms())
      out.push_back({bn->running_mean(), bn->running_var(), bn->momentum(), bn->eps(), bn->gamma(), bn->beta()});
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  ArchitectureConfig config_;
  Normalization normalization_;
  Sequential<T> body_;
};

/// Linear classifier g: embeddings [m,d] -> logits [m,K].
template <typename T>
class ClassifierHead {
 public:
  ClassifierHead(std::size_t embedding_dim, std::size_t num_classes, Rng& rng) : linear_(embedding_dim, num_classes, rng) {}

  Tensor<T> forward(const Tensor<T>& embeddings) {
    if (embeddings.rank() != 2 || embeddings.dim(1) != linear_.in_features())
      throw ShapeError("classifier: embedding dimension " + (embeddings.rank() == 2 ? std::to_string(embeddings.dim(1)) : shape_string(embeddings.shape())) +
                       " does not match head input " + std::to_string(linear_.in_features()));
    return linear_.forward(embeddings, Mode::eval);
  }
  Tensor<T> backward(const Tensor<T>& grad_logits) { return linear_.backward(grad_logits); }

  std::size_t embedding_dim() const { return linear_.in_features(); }
  std::size_t num_classes() const { return linear_.out_features(); }
  Tensor<T>& weight() { return linear_.weight().value; }
  Tensor<T>& bias() { return linear_.bias().value; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    linear_.collect_parameters("", out);
    return out;
  }
  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  Linear<T> linear_;
};

/// Source extractor f_s, shared classifier g_s and (once adapted) target
/// extractor f_t.
template <typename T>
struct ModelBundle {
  FeatureExtractor<T> f_s;
  ClassifierHead<T> g_s;
  std::optional<FeatureExtractor<T>> f_t;
  std::size_t num_classes = 0;

  void check() const {
    if (g_s.embedding_dim() != f_s.embedding_dim()) throw ShapeError("bundle: g_s and f_s embedding dims differ");
    if (f_t && f_t->embedding_dim() != f_s.embedding_dim()) throw ShapeError("bundle: f_s and f_t embedding dims differ");
  }
};

template <typename T>
ModelBundle<T> make_bundle(const ArchitectureConfig& config, std::size_t num_classes, const Normalization& norm,
                           std::uint64_t seed, bool with_target) {
  Rng rng_s(derive_seed(seed, {0xf5ULL}));
  Rng rng_g(derive_seed(seed, {0x95ULL}));
  ModelBundle<T> bundle{FeatureExtractor<T>(config, norm, rng_s), ClassifierHead<T>(config.embedding_dim, num_classes, rng_g),
                        std::nullopt, num_classes};
  if (with_target) {
    Rng rng_t(derive_seed(seed, {0xf7ULL}));
    bundle.f_t.emplace(config, norm, rng_t);
  }
  return bundle;
}

template <typename T>
FeatureBatch<T> forward_features(FeatureExtractor<T>& model, const Tensor<float>& images, Mode mode,
                                 ExtractorTag extractor = ExtractorTag::f_s, DomainTag domain = DomainTag::source) {
  return {model.forward(images, mode), extractor, domain};
}

template <typename T>
Tensor<T> forward_logits(ClassifierHead<T>& head, const FeatureBatch<T>& features) {
  return head.forward(features.embeddings);
}

/// CRC-32 over every parameter value in declaration order.
template <typename T>
std::string parameter_checksum(const std::vector<Parameter<T>*>& params) {
  std::vector<unsigned char> bytes;
  for (const auto* p : params) {
    const auto b = io::as_bytes(p->value.values());
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  return io::crc32_hex(bytes);
}

template <typename T>
std::string buffer_checksum(const std::vector<BufferRef<T>>& buffers) {
  std::vector<unsigned char> bytes;
  for (const auto& b : buffers) {
    const auto v = io::as_bytes(b.value->values());
    bytes.insert(bytes.end(), v.begin(), v.end());
  }
  return io::crc32_hex(bytes);
}

}  // namespace dafr2::nn
