#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vaut/tensor.hpp"
#include "vaut/vivit.hpp"

namespace vaut {

inline constexpr std::array<const char*, kNumAUs> kAUNames{"AU1",  "AU2",  "AU4",  "AU6",  "AU7",  "AU10",
                                                           "AU12", "AU15", "AU23", "AU24", "AU25", "AU26"};

/// One frame of AU codes: 0, 1, or −1 (unknown).
using AULabelFrame = std::array<std::int8_t, kNumAUs>;

/// Throws UsageError unless every entry is 0, 1 or (when allowed) −1.
void check_label_frame(const AULabelFrame& frame, bool allow_unknown);

/// Thresholds probabilities [..., 12] at `threshold` (p ≥ threshold → 1).
template <FloatElement T>
std::vector<AULabelFrame> binarize(const Tensor<T>& probabilities, double threshold = 0.5);

/// Label tensor [..., 12] holding 0/1/−1 to frames.
template <FloatElement T>
std::vector<AULabelFrame> to_label_frames(const Tensor<T>& labels);

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
};

struct PerAUScores {
  std::array<double, kNumAUs> f1{};
  /// False when 2TP + FP + FN = 0; that AU's F1 is reported as 0.
  std::array<bool, kNumAUs> defined{};
  std::array<ConfusionCounts, kNumAUs> counts{};

  double macro() const;
};

/// Pooled frame-level F1 per AU; frames labeled −1 are skipped for that AU.
PerAUScores per_au_f1(const std::vector<AULabelFrame>& predictions, const std::vector<AULabelFrame>& labels);
/// Unweighted mean of the 12 per-AU F1 values.
double macro_f1(const std::vector<AULabelFrame>& predictions, const std::vector<AULabelFrame>& labels);

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

/// Video-level partition into k folds; sizes differ by at most one.
std::vector<Fold> kfold_split(const std::vector<std::string>& video_ids, std::size_t k, std::uint64_t seed);

struct FoldScore {
  std::string id;
  std::optional<double> macro_f1;  // empty when the fold failed
  std::string error;
};

struct FoldReport {
  std::vector<FoldScore> folds;
  std::optional<double> val_score;
  std::optional<PerAUScores> val_per_au;
};

struct ComparisonRow {
  std::string label;
  double value;
};

/// Published reference numbers, shown for context only.
std::vector<ComparisonRow> literature_rows();

std::string render_report(const FoldReport& report, const std::vector<ComparisonRow>& comparison);
/// Machine-readable `key = value` form of a report.
std::string report_key_values(const FoldReport& report);
FoldReport parse_report_key_values(const std::string& text, const std::string& source);

/// Frame table in CSV form: header `frame,AU1,...,AU26`, then one row per
/// frame with 0/1/−1 values.
std::string label_csv(const std::vector<AULabelFrame>& frames);
std::vector<AULabelFrame> parse_label_csv(const std::string& text, const std::string& source);

}  // namespace vaut
