#pragma once

#include <filesystem>
#include <memory>

#include "vaut/config.hpp"

namespace vaut {

// Layout: text header
//   VAUTCKPT 1
//   config
//   <key = value lines>
//   params <count>
//   <name> <shape> <frozen 0|1>
//   end
// followed by one binary tensor record per manifest line, in order.

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const AUDetector<float>& model, const RunConfig& config);

struct LoadedCheckpoint {
  RunConfig config;
  std::unique_ptr<AUDetector<float>> model;
};

/// Rebuilds the model from the stored config and restores every parameter
/// and its frozen flag. Manifest mismatches are ParseErrors.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vaut
