#pragma once

#include <vector>

#include "vaut/config.hpp"

namespace vaut::testing {

// Smallest model the pipeline accepts: 16×16 frames, 4-frame clips.
inline RunConfig tiny_run_config() {
  RunConfig cfg;
  auto& bb = cfg.model.backbone;
  bb.stem_width = 8;
  bb.stage_widths = {8, 8, 8, 8};
  bb.stage_depths = {1, 1, 1, 1};
  bb.group_width = 4;
  bb.stage_strides = {1, 2, 1, 1};
  bb.n_frozen_stages = 1;
  cfg.model.tubelet = {2, 2, 2, 8};
  auto& enc = cfg.model.encoder;
  enc.model_dim = 8;
  enc.n_heads = 2;
  enc.n_spatial_layers = 1;
  enc.n_temporal_layers = 1;
  enc.layer_budget = 2;
  enc.mlp_ratio = 2;
  cfg.train.seq_len = 4;
  cfg.train.batch_size = 2;
  cfg.train.max_steps = 6;
  cfg.train.eval_every = 3;
  cfg.data.n_videos = 3;
  cfg.data.frames_per_video = 10;
  cfg.data.image_size = 16;
  return cfg;
}

template <typename T>
std::vector<T> vec(const Tensor<T>& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace vaut::testing
