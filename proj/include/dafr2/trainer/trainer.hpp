#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>

#include "dafr2/core/metrics.hpp"
#include "dafr2/corruptions/corruption.hpp"
#include "dafr2/datasets/dataset.hpp"
#include "dafr2/nn/checkpoint.hpp"
#include "dafr2/nn/loss.hpp"
#include "dafr2/nn/model.hpp"
#include "dafr2/nn/optim.hpp"

namespace dafr2 {

using Bundle = nn::ModelBundle<float>;

struct OptimizerConfig {
  std::string kind;
  double lr = 0.0;
  double weight_decay = 0.0;
  double momentum = 0.0;  // sgd only
};

struct ScheduleConfig {
  std::string kind = "cosine";
  std::size_t t_max = 300;  // epochs
  double eta_min = 1e-4;
};

struct AugmentConfig {
  std::size_t crop_pad = 4;
  double hflip_p = 0.5;
};

enum class TargetInit { random, copy };

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  OptimizerConfig source_opt{"sgd", 0.1, 1e-4, 0.9};
  OptimizerConfig target_opt{"adamw", 1e-3, 1e-4, 0.0};
  ScheduleConfig schedule;
  AugmentConfig augmentation;
  std::uint64_t seed = 0;
  nn::ArchitectureConfig architecture;
  TargetInit target_init = TargetInit::random;
  std::size_t extra_bn_passes = 0;  // adaptation-only f_s forwards on target batches per step
  std::optional<std::filesystem::path> checkpoint_dir;

  void validate() const {
    if (epochs < 1) throw ConfigError("trainer.epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("trainer.batch_size must be >= 2 (batch norm needs two samples)");
    if (source_opt.kind != "sgd") throw ConfigError("trainer.source_opt.kind must be sgd");
    if (target_opt.kind != "adamw") throw ConfigError("trainer.target_opt.kind must be adamw");
    if (schedule.kind != "cosine") throw ConfigError("trainer.schedule.kind must be cosine");
    if (!(source_opt.lr > 0 && target_opt.lr > 0 && schedule.eta_min > 0))
      throw ConfigError("learning rates must be positive");
    if (source_opt.weight_decay < 0 || target_opt.weight_decay < 0 || source_opt.momentum < 0)
      throw ConfigError("weight decay and momentum must be non-negative");
    if (schedule.t_max == 0) throw ConfigError("trainer.schedule.t_max must be positive");
    if (!(augmentation.hflip_p >= 0 && augmentation.hflip_p <= 1)) throw ConfigError("hflip_p must be in [0,1]");
  }
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l_ce = 0.0;
  double l_regression = 0.0;
  double l_reg_source = 0.0;
  double l_reg_target = 0.0;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, LossRecord last) : Error(what), last_(last) {}
  const LossRecord& last_record() const { return last_; }

 private:
  LossRecord last_;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double source_lr = 0.0;
  double target_lr = 0.0;
  double mean_l_ce = 0.0;
  double mean_l_regression = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  Bundle bundle;
  std::vector<LossRecord> history;
  std::vector<EpochSummary> epochs;
};

/// Random crop from a zero-padded copy plus horizontal flip, per image.
inline Tensor<float> augment(const Tensor<float>& images, const AugmentConfig& cfg, Rng& rng) {
  if (cfg.crop_pad == 0 && cfg.hflip_p == 0.0) return images;
  Tensor<float> out(images.shape());
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const auto pad = static_cast<std::ptrdiff_t>(cfg.crop_pad);
  for (std::size_t i = 0; i < n; ++i) {
    const auto dy = static_cast<std::ptrdiff_t>(rng.below(2 * cfg.crop_pad + 1)) - pad;
    const auto dx = static_cast<std::ptrdiff_t>(rng.below(2 * cfg.crop_pad + 1)) - pad;
    const bool flip = rng.bernoulli(cfg.hflip_p);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* src = images.data() + (i * c + ch) * h * w;
      float* dst = out.data() + (i * c + ch) * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t xs = flip ? w - 1 - x : x;
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy, sx = static_cast<std::ptrdiff_t>(xs) + dx;
          dst[y * w + x] = (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w))
                               ? 0.0f
                               : src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
        }
    }
  }
  return out;
}

inline std::vector<nn::Parameter<float>*> source_parameters(Bundle& b) {
  auto p = b.f_s.parameters();
  for (auto* q : b.g_s.parameters()) p.push_back(q);
  return p;
}

inline nn::Sgd<float> make_source_optimizer(Bundle& b, const TrainConfig& cfg) {
  return nn::Sgd<float>(source_parameters(b), cfg.source_opt.lr, cfg.source_opt.momentum, cfg.source_opt.weight_decay);
}

inline nn::AdamW<float> make_target_optimizer(Bundle& b, const TrainConfig& cfg) {
  if (!b.f_t) throw ParameterError("bundle has no target extractor");
  return nn::AdamW<float>(b.f_t->parameters(), cfg.target_opt.lr, cfg.target_opt.weight_decay);
}

/// Step 1: one SGD step of cross-entropy on g_s(f_s(x)). f_t is not touched.
inline LossRecord train_source_step(Bundle& b, const Tensor<float>& x, std::span<const std::int64_t> y, nn::Sgd<float>& opt,
                                    LossRecord rec = {}) {
  opt.zero_grad();
  const auto feats = b.f_s.forward(x, nn::Mode::train);
  const auto logits = b.g_s.forward(feats);
  const auto ce = nn::cross_entropy(logits, y);
  rec.l_ce = ce.value;
  if (!std::isfinite(ce.value)) throw DivergenceError("cross-entropy became non-finite at step " + std::to_string(rec.step), rec);
  b.f_s.backward(b.g_s.backward(ce.grad));
  opt.step();
  return rec;
}

/// Step 2: f_s runs in train mode without parameter updates (its BN running
/// statistics follow x and z); f_t regresses f_s's embeddings with
/// 1/2 MSE(f_t(x), f_s(x)) + 1/2 MSE(f_t(z), f_s(z)).
inline LossRecord distill_step(Bundle& b, const Tensor<float>& x, const Tensor<float>& z, nn::AdamW<float>& opt,
                               LossRecord rec = {}) {
  if (!b.f_t) throw ParameterError("distill_step needs a target extractor");
  if (b.f_t->embedding_dim() != b.f_s.embedding_dim()) throw ShapeError("f_s and f_t embedding dims differ");
  const auto target_x = b.f_s.forward(x, nn::Mode::train);
  const auto target_z = b.f_s.forward(z, nn::Mode::train);

  opt.zero_grad();
  auto half = [](nn::LossResult<float>& r) {
    for (auto& g : r.grad.values()) g *= 0.5f;
  };
  auto lx = nn::mse(b.f_t->forward(x, nn::Mode::train), target_x);
  half(lx);
  b.f_t->backward(lx.grad);
  auto lz = nn::mse(b.f_t->forward(z, nn::Mode::train), target_z);
  half(lz);
  b.f_t->backward(lz.grad);

  rec.l_reg_source = lx.value;
  rec.l_reg_target = lz.value;
  rec.l_regression = 0.5 * lx.value + 0.5 * lz.value;
  if (!std::isfinite(rec.l_regression))
    throw DivergenceError("regression loss became non-finite at step " + std::to_string(rec.step), rec);
  opt.step();
  return rec;
}

namespace detail {

inline bool usable(const std::vector<std::size_t>& batch) { return batch.size() >= 2; }

inline const std::vector<std::size_t>& next_usable(BatchStream& s) {
  for (;;) {
    const auto& b = s.next();
    if (usable(b)) return b;
  }
}

inline double mean_of(const std::vector<LossRecord>& h, std::size_t from, double LossRecord::*field) {
  double s = 0.0;
  for (std::size_t i = from; i < h.size(); ++i) s += h[i].*field;
  return h.size() > from ? s / static_cast<double>(h.size() - from) : 0.0;
}

inline TrainResult run_training(const LabeledDataset& source, const UnlabeledDataset* target, const TrainConfig& cfg) {
  cfg.validate();
  validate(source);
  if (source.size() < 2) throw ParameterError("source dataset needs at least 2 images");
  if (cfg.architecture.in_channels != source.channels())
    throw ConfigError("architecture in_channels does not match the source images");
  if (target) {
    validate(*target);
    if (target->size() < 2) throw ParameterError("target dataset needs at least 2 images");
    const auto& a = source.images.shape();
    const auto& b = target->images.shape();
    if (a[1] != b[1] || a[2] != b[2] || a[3] != b[3]) throw ShapeError("source and target image geometry differ");
  }
  const Normalization norm = source.normalization.empty() ? compute_normalization(source.images) : source.normalization;

  TrainResult result{nn::make_bundle<float>(cfg.architecture, source.num_classes, norm, cfg.seed, target != nullptr), {}, {}};
  Bundle& b = result.bundle;
  if (target && cfg.target_init == TargetInit::copy) b.f_t = b.f_s;

  auto source_opt = make_source_optimizer(b, cfg);
  std::optional<nn::AdamW<float>> target_opt;
  if (target) target_opt.emplace(make_target_optimizer(b, cfg));

  const BatchPlan step1_plan{cfg.batch_size, derive_seed(cfg.seed, {0x5101ULL}), false};
  std::optional<BatchStream> step2_source, step2_target;
  if (target) {
    step2_source.emplace(source.size(), BatchPlan{cfg.batch_size, derive_seed(cfg.seed, {0x5202ULL}), false});
    step2_target.emplace(target->size(), BatchPlan{cfg.batch_size, derive_seed(cfg.seed, {0x5203ULL}), false});
  }

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_s = nn::cosine_lr(cfg.source_opt.lr, cfg.schedule.eta_min, epoch, cfg.schedule.t_max);
    const double lr_t = nn::cosine_lr(cfg.target_opt.lr, cfg.schedule.eta_min, epoch, cfg.schedule.t_max);
    source_opt.set_lr(lr_s);
    if (target_opt) target_opt->set_lr(lr_t);
    Rng aug1(derive_seed(cfg.seed, {epoch, 0xa1ULL}));
    Rng aug2(derive_seed(cfg.seed, {epoch, 0xa2ULL}));
    const std::size_t first = result.history.size();

    for (const auto& idx : epoch_batches(source.size(), step1_plan, epoch)) {
      if (!usable(idx)) continue;
      LossRecord rec{step, epoch};
      const auto x = augment(gather_rows(source.images, idx), cfg.augmentation, aug1);
      std::vector<std::int64_t> y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back(source.labels[i]);
      rec = train_source_step(b, x, y, source_opt, rec);

      if (target) {
        const auto x2 = augment(gather_rows(source.images, next_usable(*step2_source)), cfg.augmentation, aug2);
        const auto z = augment(gather_rows(target->images, next_usable(*step2_target)), cfg.augmentation, aug2);
        for (std::size_t k = 0; k < cfg.extra_bn_passes; ++k)
          b.f_s.forward(augment(gather_rows(target->images, next_usable(*step2_target)), cfg.augmentation, aug2),
                        nn::Mode::train);
        rec = distill_step(b, x2, z, *target_opt, rec);
      }
      result.history.push_back(rec);
      ++step;
    }
    result.epochs.push_back({epoch, lr_s, target ? lr_t : 0.0, mean_of(result.history, first, &LossRecord::l_ce),
                             mean_of(result.history, first, &LossRecord::l_regression), result.history.size() - first});
    if (cfg.checkpoint_dir)
      nn::save_checkpoint(b, *cfg.checkpoint_dir, {step, target ? "dafr2" : "baseline"});
  }
  return result;
}

}  // namespace detail

/// Source-only training (Step 1 alone). Uses the same seed-derived streams as
/// train_dafr2, so both runs reach bit-identical f_s/g_s parameters.
inline TrainResult train_baseline(const LabeledDataset& source, const TrainConfig& cfg) {
  return detail::run_training(source, nullptr, cfg);
}

inline TrainResult train_dafr2(const LabeledDataset& source, const UnlabeledDataset& target, const TrainConfig& cfg) {
  return detail::run_training(source, &target, cfg);
}

// ---------------------------------------------------------------- inference

enum class Route { baseline, adapted };

inline std::string_view route_name(Route r) { return r == Route::baseline ? "baseline" : "adapted"; }

inline nn::FeatureExtractor<float>& route_extractor(Bundle& b, Route r) {
  if (r == Route::baseline) return b.f_s;
  if (!b.f_t) throw ParameterError("adapted route needs a bundle with f_t");
  return *b.f_t;
}

/// Eval-mode embeddings [m,d], computed in chunks.
inline Tensor<float> extract_features(nn::FeatureExtractor<float>& f, const Tensor<float>& images, std::size_t chunk = 256) {
  const std::size_t n = images.dim(0);
  Tensor<float> out({n, f.embedding_dim()});
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto e = f.forward(gather_rows(images, idx), nn::Mode::eval);
    std::copy(e.values().begin(), e.values().end(), out.data() + begin * f.embedding_dim());
  }
  return out;
}

struct Prediction {
  std::vector<std::int64_t> labels;
  Tensor<float> logits;
};

/// argmax g_s(f(x)) with f = f_t for the adapted route; everything in eval mode.
inline Prediction infer(Bundle& b, const Tensor<float>& images, Route route = Route::adapted) {
  Prediction p;
  p.logits = b.g_s.forward(extract_features(route_extractor(b, route), images));
  p.labels = nn::argmax_rows(p.logits);
  return p;
}

struct EvalResult {
  Route route = Route::adapted;
  double accuracy = 0.0;
  double mean_ce = 0.0;
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> per_sample_ce;
  std::vector<std::int64_t> predictions;
  std::string dataset;
  std::string provenance = "natural";

  /// accuracy and mean_ce as metric records, tagged with route and, when the
  /// data came from a corruption, its kind and severity.
  std::vector<MetricRecord> records(const std::string& run_id, std::map<std::string, std::string> tags = {}) const {
    tags["route"] = std::string(route_name(route));
    if (const auto spec = parse_provenance(provenance)) {
      tags["corruption"] = std::string(kind_name(spec->kind));
      tags["severity"] = std::to_string(spec->severity);
    } else {
      tags.try_emplace("corruption", "none");
      tags.try_emplace("severity", "0");
    }
    const auto ts = utc_timestamp();
    return {{"accuracy", {accuracy}, tags, ts, run_id}, {"mean_ce", {mean_ce}, tags, ts, run_id}};
  }
};

inline EvalResult evaluate(Bundle& b, const LabeledDataset& ds, Route route) {
  if (ds.labels.size() != ds.size()) throw ParameterError("evaluate: dataset has no labels");
  const auto pred = infer(b, ds.images, route);
  const std::size_t k = b.num_classes;
  const auto ce = nn::cross_entropy(pred.logits, ds.labels);
  EvalResult r;
  r.route = route;
  r.n = ds.size();
  r.mean_ce = ce.value;
  r.per_sample_ce = ce.per_sample;
  r.predictions = pred.labels;
  r.dataset = ds.name;
  r.provenance = ds.provenance;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const auto t = static_cast<std::size_t>(ds.labels[i]), p = static_cast<std::size_t>(pred.labels[i]);
    ++r.confusion.at(t).at(p);
    correct += (t == p);
  }
  r.accuracy = r.n ? static_cast<double>(correct) / static_cast<double>(r.n) : 0.0;
  return r;
}

inline EvalResult evaluate(Bundle& b, const UnlabeledDataset& ds, Route route) {
  if (!ds.reference_labels) throw ParameterError("evaluate: '" + ds.name + "' carries no labels");
  LabeledDataset l = with_reference_labels(ds);
  l.num_classes = std::max(l.num_classes, b.num_classes);
  return evaluate(b, l, route);
}

inline EvalResult evaluate(const std::filesystem::path& checkpoint, const LabeledDataset& ds, Route route) {
  auto b = nn::load_checkpoint<float>(checkpoint);
  return evaluate(b, ds, route);
}

}  // namespace dafr2
