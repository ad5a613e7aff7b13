#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vaut/checkpoint.hpp"

namespace vaut {

struct HistoryRow {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> macro_f1;
};

/// `step,loss,lr,macro_f1` lines (macro_f1 left empty when not evaluated).
std::string history_csv(const std::vector<HistoryRow>& history);

struct TrainOptions {
  /// Scored at eval points; the training set itself is scored when null.
  const Dataset* val = nullptr;
  /// When set, `step_<n>.ckpt` is written at every eval point.
  std::filesystem::path checkpoint_dir;
  std::function<void(const HistoryRow&)> on_step;
};

/// Minibatch SGD on focal loss with a cosine warm-restart schedule. Clip
/// order is reshuffled each epoch from train.seed. A non-finite loss aborts
/// with a NumericError naming the step.
std::vector<HistoryRow> train_loop(AUDetector<float>& model, const Dataset& train, const RunConfig& config,
                                   const TrainOptions& options = {});

/// Sigmoid probabilities [T, 12] for every frame of `video`.
Tensor<float> predict_video(const AUDetector<float>& model, const Video& video, std::size_t seq_len);

/// Uniform average of member probabilities for one clip [T, 3, H, W] → [T, 12].
/// Exact for identical members and invariant to member order.
Tensor<float> ensemble_predict(const std::vector<const AUDetector<float>*>& models, const Tensor<float>& clip);
Tensor<float> ensemble_predict_video(const std::vector<const AUDetector<float>*>& models, const Video& video,
                                     std::size_t seq_len);

/// Pooled-frame scores of thresholded predictions over every video.
PerAUScores evaluate(const std::vector<const AUDetector<float>*>& models, const Dataset& dataset,
                     std::size_t seq_len, double threshold);

struct KFoldOutcome {
  FoldReport report;
  std::vector<std::unique_ptr<AUDetector<float>>> models;  // null for failed folds
};

/// Trains one model per fold of `pool`, scores each on its held-out videos,
/// and scores the ensemble of fold models on `val` when given. A failing
/// fold is recorded in the report and the others continue. `workers` > 1
/// trains folds concurrently (results are identical either way).
KFoldOutcome kfold_run(const Dataset& pool, const Dataset* val, const RunConfig& config, std::size_t k,
                       const std::filesystem::path& out_dir = {}, std::size_t workers = 1);

struct GradcheckResult {
  std::string name;
  double error;
  double tolerance;
  bool passed() const { return error < tolerance; }
};

/// Central-difference checks in double precision for every differentiable
/// op, each module, and a micro end-to-end model ending in focal loss.
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed = 0);

}  // namespace vaut
