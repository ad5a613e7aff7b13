#pragma once

#include "vaut/backbone.hpp"
#include "vaut/vivit.hpp"

namespace vaut {

struct ModelConfig {
  BackboneConfig backbone;
  TubeletConfig tubelet{2, 2, 2, 64};
  EncoderConfig encoder;

  /// Checks each part plus cross-part agreement (embed_dim vs model_dim).
  void validate() const;
  /// Frame side lengths must be multiples of this.
  std::size_t frame_multiple() const { return backbone.total_stride() * std::max(tubelet.h, tubelet.w); }
};

/// Backbone followed by the video transformer head: clip frames
/// [B, T, 3, H, W] → per-frame AU logits [B, T, 12].
template <FloatElement T>
class AUDetector {
 public:
  AUDetector(const ModelConfig& config, Rng& rng);

  Tensor<T> forward(const Tensor<T>& clips) const;

  /// All parameters, backbone first, under "backbone." and "head." prefixes.
  ParameterList<T> parameters() const;

  const ModelConfig& config() const { return config_; }
  Backbone<T>& backbone() { return backbone_; }
  VivitHead<T>& head() { return head_; }

 private:
  ModelConfig config_;
  Backbone<T> backbone_;
  VivitHead<T> head_;
};

}  // namespace vaut
