#pragma once

#include <array>
#include <optional>
#include <vector>

#include "vaut/layers.hpp"

namespace vaut {

inline constexpr std::size_t kNumStages = 4;

/// Parameters of the linear width rule: block j has raw width w0 + slope·j,
/// snapped to the nearest power of `multiplier` times w0, then to a
/// multiple of `quantum`.
struct WidthRule {
  double w0 = 16;
  double slope = 8;
  double multiplier = 2;
  std::size_t depth = 5;
  std::size_t quantum = 8;
};

/// Per-block widths from the quantized linear rule. Runs of equal widths
/// form stages; more than four distinct widths is rejected.
std::vector<std::size_t> generate_widths(const WidthRule& rule);

struct StageSpec {
  std::size_t width;
  std::size_t depth;
};
/// Collapses consecutive equal widths into (width, block count) stages.
std::vector<StageSpec> widths_to_stages(const std::vector<std::size_t>& widths);

struct BackboneConfig {
  std::size_t stem_width = 16;
  std::array<std::size_t, kNumStages> stage_depths{1, 1, 2, 1};
  std::array<std::size_t, kNumStages> stage_widths{16, 24, 32, 64};
  std::size_t group_width = 8;
  double se_ratio = 0.25;
  std::array<std::size_t, kNumStages> stage_strides{1, 2, 2, 1};
  std::size_t n_frozen_stages = 1;

  void validate() const;
  /// Overwrites widths/depths with the stages produced by `rule`.
  void apply_width_rule(const WidthRule& rule);
  /// Spatial downsampling from frame to embedding grid (stem included).
  std::size_t total_stride() const;
  std::size_t embed_channels() const { return stage_widths.back(); }
};

/// Channel group count used by the backbone's normalization layers.
std::size_t norm_groups(std::size_t channels);

/// Backbone output: [B, T, E_l, E_h, E_w].
template <FloatElement T>
struct VideoEmbedding {
  Tensor<T> data;

  std::size_t batch() const { return data.dim(0); }
  std::size_t frames() const { return data.dim(1); }
  std::size_t channels() const { return data.dim(2); }
  std::size_t height() const { return data.dim(3); }
  std::size_t width() const { return data.dim(4); }
};

/// Convolution (no bias) followed by group normalization.
template <FloatElement T>
struct ConvNorm {
  Tensor<T> weight;
  Tensor<T> gamma;
  Tensor<T> beta;
  Conv2dOptions options;

  static ConvNorm create(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                         std::size_t groups, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Channel gate: global average pool, reduce, ReLU, expand, sigmoid, scale.
template <FloatElement T>
struct SqueezeExcite {
  Linear<T> reduce;
  Linear<T> expand;

  static SqueezeExcite create(std::size_t channels, double ratio, Rng& rng);
  /// Per-channel gate values, shape [n, c].
  Tensor<T> gate(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Residual bottleneck (ratio 1): 1×1 → grouped 3×3 (stride) → SE → 1×1,
/// plus identity or projected shortcut, then ReLU.
template <FloatElement T>
struct BottleneckBlock {
  ConvNorm<T> reduce;
  ConvNorm<T> grouped;
  SqueezeExcite<T> se;
  ConvNorm<T> restore;
  std::optional<ConvNorm<T>> shortcut;

  static BottleneckBlock create(std::size_t c_in, std::size_t c_out, std::size_t stride, std::size_t group_width,
                                double se_ratio, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
  void set_trainable(bool flag);
};

template <FloatElement T>
class Backbone {
 public:
  Backbone(const BackboneConfig& config, Rng& rng);

  /// frames [B·T, 3, H, W] → embedding [B, T, E_l, E_h, E_w].
  VideoEmbedding<T> forward(const Tensor<T>& frames, std::size_t batch) const;
  /// Stem and body without the final reshape: [N, E_l, E_h, E_w].
  Tensor<T> features(const Tensor<T>& frames) const;

  /// Stem plus the first `n_frozen` stages stop receiving gradients; the
  /// rest train. The stem is frozen whenever n_frozen ≥ 1.
  void freeze_stages(std::size_t n_frozen);

  void collect(const std::string& prefix, ParameterList<T>& out) const;
  ParameterList<T> parameters() const;

  const BackboneConfig& config() const { return config_; }
  ConvNorm<T>& stem() { return stem_; }
  std::vector<BottleneckBlock<T>>& stage(std::size_t index) { return stages_.at(index); }

 private:
  BackboneConfig config_;
  ConvNorm<T> stem_;
  std::array<std::vector<BottleneckBlock<T>>, kNumStages> stages_;
};

}  // namespace vaut
