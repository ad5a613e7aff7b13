#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vaut/metrics.hpp"

namespace vaut {

/// Synthetic stand-in for face video: each of the 12 latent units toggles in
/// random on/off segments and, while on, adds a Gaussian blob at its own
/// location (on channel j mod 3) to the frame.
struct SyntheticSpec {
  std::size_t n_videos = 16;
  std::size_t frames_per_video = 128;
  std::size_t image_size = 32;
  std::size_t on_min = 8;
  std::size_t on_max = 24;
  std::size_t off_min = 8;
  std::size_t off_max = 24;
  double noise_std = 0.1;
  double blob_amplitude = 1.0;
  double blob_sigma = 2.0;
  double mask_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Blob centre (x, y) in pixels for latent unit `unit`.
std::pair<double, double> unit_center(std::size_t unit, std::size_t image_size);

struct Video {
  std::string id;
  Tensor<float> frames;  // [T, 3, H, W]
  std::vector<AULabelFrame> labels;

  std::size_t length() const { return labels.size(); }
};

struct Dataset {
  std::vector<Video> videos;

  std::vector<std::string> ids() const;
  /// Videos with the given ids, in the order given.
  Dataset subset(const std::vector<std::string>& ids) const;
  std::size_t total_frames() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

/// Writes `<dir>/<id>/frames.vaut`, `<dir>/<id>/labels.csv` and
/// `<dir>/manifest.txt` (one "id frames" line per video).
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Seeded video-level split; returns (train, val) with round(n·val_fraction)
/// videos held out (at least one of each when n ≥ 2).
std::pair<Dataset, Dataset> split_by_video(const Dataset& dataset, double val_fraction, std::uint64_t seed);

/// A window of seq_len frames; frames past the end of the video are zero
/// with all labels −1 and padding = 1.
struct Clip {
  std::string video_id;
  std::size_t offset = 0;
  std::size_t n_real = 0;
  Tensor<float> frames;  // [seq_len, 3, H, W]
  Tensor<float> labels;  // [seq_len, 12]
  std::vector<std::uint8_t> padding;
};

/// Windows starting at 0, stride, 2·stride, … while the start is inside the
/// video. stride = 0 means stride = seq_len.
std::vector<Clip> chunk_video(const Video& video, std::size_t seq_len, std::size_t stride = 0);
std::vector<Clip> load_and_chunk(const Dataset& dataset, std::size_t seq_len, std::size_t stride = 0);
std::vector<Clip> load_and_chunk(const std::filesystem::path& dir, std::size_t seq_len, std::size_t stride = 0);

struct ClipBatch {
  Tensor<float> frames;  // [B, T, 3, H, W]
  Tensor<float> labels;  // [B, T, 12]
  std::vector<std::string> video_ids;
  std::vector<std::size_t> offsets;
  std::vector<std::uint8_t> padding;  // B·T entries
};

ClipBatch make_batch(const std::vector<Clip>& clips, const std::vector<std::size_t>& indices);

}  // namespace vaut
