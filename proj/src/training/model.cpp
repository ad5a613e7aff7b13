#include "vaut/model.hpp"

namespace vaut {

void ModelConfig::validate() const {
  backbone.validate();
  tubelet.validate();
  encoder.validate();
  if (tubelet.embed_dim != encoder.model_dim) {
    throw ConfigError("tubelet.embed_dim " + std::to_string(tubelet.embed_dim) + " must equal encoder.model_dim " +
                      std::to_string(encoder.model_dim));
  }
}

template <FloatElement T>
AUDetector<T>::AUDetector(const ModelConfig& config, Rng& rng)
    : config_((config.validate(), config)),
      backbone_(config.backbone, rng),
      head_(config.tubelet, config.encoder, config.backbone.embed_channels(), rng) {}

template <FloatElement T>
Tensor<T> AUDetector<T>::forward(const Tensor<T>& clips) const {
  if (clips.rank() != 5 || clips.dim(2) != 3) {
    throw DimensionError("model expects clips [B,T,3,H,W], got " + shape_str(clips.shape()));
  }
  const std::size_t b = clips.dim(0);
  const Tensor<T> frames = reshape(clips, {b * clips.dim(1), 3, clips.dim(3), clips.dim(4)});
  return head_.forward(backbone_.forward(frames, b));
}

template <FloatElement T>
ParameterList<T> AUDetector<T>::parameters() const {
  ParameterList<T> out;
  backbone_.collect("backbone", out);
  head_.collect("head", out);
  return out;
}

template class AUDetector<float>;
template class AUDetector<double>;

}  // namespace vaut
