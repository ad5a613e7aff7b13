#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vaut/data.hpp"
#include "vaut/model.hpp"
#include "vaut/training.hpp"

namespace vaut {

struct TrainConfig {
  std::size_t seq_len = 32;
  std::size_t batch_size = 2;
  std::size_t max_steps = 500;
  std::uint64_t seed = 0;
  /// Evaluate (and checkpoint) every this many steps; 0 = only at the end.
  std::size_t eval_every = 100;
  /// Refuse to run with more than one worker thread.
  bool deterministic = true;
  double val_fraction = 0.25;

  void validate() const;
};

struct EvalConfig {
  double threshold = 0.5;
  std::size_t k = 5;
};

struct RunConfig {
  ModelConfig model;
  FocalLossConfig focal;
  SchedulerConfig scheduler;
  OptimizerConfig optimizer;
  TrainConfig train;
  SyntheticSpec data;
  EvalConfig eval;

  void validate() const;
  double eta_max() const { return scheduler.eta_max.value_or(optimizer.lr); }
};

/// Every accepted key, in the order serialize_config writes them.
std::vector<std::string> config_keys();

/// Applies `key = value` lines on top of `base`. Blank lines and lines
/// starting with '#' are ignored; unknown or repeated keys are errors.
RunConfig parse_config(const std::string& text, const std::string& source, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

/// Sets one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace vaut
