#pragma once

#include "dafr2/trainer/trainer.hpp"

namespace dafr2 {

/// Small CNN settings that train the synthetic-shapes task on one CPU core in
/// well under a minute per run.
inline TrainConfig desk_train_config(std::uint64_t seed = 0, std::size_t epochs = 8) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = epochs;
  cfg.schedule.t_max = epochs;
  cfg.batch_size = 32;
  cfg.architecture.widths = {8, 16, 32};
  cfg.architecture.embedding_dim = 32;
  cfg.augmentation.crop_pad = 2;
  return cfg;
}

}  // namespace dafr2
