#include "vaut/vivit.hpp"

#include <cmath>

namespace vaut {

void TubeletConfig::validate() const {
  if (t == 0 || h == 0 || w == 0 || embed_dim == 0) throw ConfigError("tubelet extents and embed_dim must be positive");
}

void EncoderConfig::validate() const {
  if (n_heads == 0 || model_dim == 0) throw ConfigError("encoder n_heads and model_dim must be positive");
  if (model_dim % n_heads != 0) {
    throw ConfigError("encoder model_dim " + std::to_string(model_dim) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (n_spatial_layers == 0 || n_temporal_layers == 0) throw ConfigError("encoder needs at least one layer per stack");
  if (n_spatial_layers + n_temporal_layers != layer_budget) {
    throw ConfigError("encoder layers " + std::to_string(n_spatial_layers) + " + " +
                      std::to_string(n_temporal_layers) + " must equal the layer budget " +
                      std::to_string(layer_budget));
  }
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("encoder mlp_ratio must give a positive hidden size");
  if (max_spatial_positions == 0 || max_temporal_positions == 0) {
    throw ConfigError("encoder positional table sizes must be positive");
  }
}

std::size_t EncoderConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(model_dim)));
}

template <FloatElement T>
TubeletEmbedding<T> TubeletEmbedding<T>::create(const TubeletConfig& config, std::size_t channels, Rng& rng) {
  config.validate();
  const std::size_t patch = channels * config.t * config.h * config.w;
  return {config, Linear<T>::xavier(patch, config.embed_dim, rng)};
}

template <FloatElement T>
TokenSequence<T> TubeletEmbedding<T>::forward(const VideoEmbedding<T>& v) const {
  const auto check = [](std::size_t extent, std::size_t block, const char* axis) {
    if (extent % block != 0) {
      throw DimensionError(std::string("tubelet: ") + axis + " extent " + std::to_string(extent) +
                           " not divisible by " + std::to_string(block));
    }
  };
  check(v.frames(), config.t, "temporal (T)");
  check(v.height(), config.h, "height (E_h)");
  check(v.width(), config.w, "width (E_w)");
  const std::size_t patch = v.channels() * config.t * config.h * config.w;
  if (patch != projection.in_features()) {
    throw DimensionError("tubelet: embedding has " + std::to_string(v.channels()) +
                         " channels, projection expects " +
                         std::to_string(projection.in_features() / (config.t * config.h * config.w)));
  }
  const TokenLayout layout{v.frames() / config.t, v.height() / config.h, v.width() / config.w};
  const std::size_t b = v.batch();
  Tensor<T> blocks = reshape(v.data, {b, layout.n_t, config.t, v.channels(), layout.n_h, config.h, layout.n_w,
                                      config.w});
  blocks = permute(blocks, {0, 1, 4, 6, 3, 2, 5, 7});
  blocks = reshape(blocks, {b, layout.count(), patch});
  return {projection.forward(blocks), layout};
}

template <FloatElement T>
void TubeletEmbedding<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  projection.collect(prefix + ".proj", out);
}

template <FloatElement T>
TokenSequence<T> add_positional(const TokenSequence<T>& seq, const Tensor<T>& table) {
  const Tensor<T>& x = seq.tokens;
  if (x.rank() != 3) throw DimensionError("add_positional expects tokens [B,N,D], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(1);
  if (table.rank() != 2 || table.dim(1) != x.dim(2)) {
    throw DimensionError("positional table " + shape_str(table.shape()) + " incompatible with tokens " +
                         shape_str(x.shape()));
  }
  if (table.dim(0) < n) {
    throw ConfigError("positional table holds " + std::to_string(table.dim(0)) + " positions, sequence needs " +
                      std::to_string(n));
  }
  return {add(x, slice(table, 0, 0, n)), seq.layout};
}

template <FloatElement T>
MultiHeadSelfAttention<T> MultiHeadSelfAttention<T>::create(std::size_t dim, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || dim % n_heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(n_heads) +
                      " heads");
  }
  return {Linear<T>::xavier(dim, dim, rng), Linear<T>::xavier(dim, dim, rng), Linear<T>::xavier(dim, dim, rng),
          Linear<T>::xavier(dim, dim, rng), n_heads};
}

template <FloatElement T>
Tensor<T> MultiHeadSelfAttention<T>::forward(const Tensor<T>& x, Tensor<T>* attention) const {
  const std::size_t d = query.in_features();
  if (x.rank() != 3 || x.dim(2) != d) {
    throw DimensionError("attention expects [B,N," + std::to_string(d) + "], got " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t dh = d / n_heads;
  const auto heads = [&](const Linear<T>& proj, const std::vector<std::size_t>& perm) {
    return permute(reshape(proj.forward(x), {b, n, n_heads, dh}), perm);
  };
  const Tensor<T> q = heads(query, {0, 2, 1, 3});  // [B,H,N,dh]
  const Tensor<T> kt = heads(key, {0, 2, 3, 1});   // [B,H,dh,N]
  const Tensor<T> v = heads(value, {0, 2, 1, 3});  // [B,H,N,dh]
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  Tensor<T> weights = softmax(scale(matmul(q, kt), inv_sqrt), 3);
  if (attention) *attention = weights;
  Tensor<T> context = reshape(permute(matmul(weights, v), {0, 2, 1, 3}), {b, n, d});
  return output.forward(context);
}

template <FloatElement T>
void MultiHeadSelfAttention<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  query.collect(prefix + ".q", out);
  key.collect(prefix + ".k", out);
  value.collect(prefix + ".v", out);
  output.collect(prefix + ".out", out);
}

template <FloatElement T>
TransformerLayer<T> TransformerLayer<T>::create(std::size_t dim, std::size_t n_heads, std::size_t hidden, Rng& rng) {
  TransformerLayer layer;
  layer.norm1 = LayerNormParams<T>::create(dim);
  layer.attention = MultiHeadSelfAttention<T>::create(dim, n_heads, rng);
  layer.norm2 = LayerNormParams<T>::create(dim);
  layer.mlp = {Linear<T>::xavier(dim, hidden, rng), Linear<T>::xavier(hidden, dim, rng)};
  return layer;
}

template <FloatElement T>
Tensor<T> TransformerLayer<T>::forward(const Tensor<T>& z, Tensor<T>* attention_weights) const {
  Tensor<T> y = add(attention.forward(norm1.forward(z), attention_weights), z);
  return add(mlp.forward(norm2.forward(y)), y);
}

template <FloatElement T>
void TransformerLayer<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm1.collect(prefix + ".ln1", out);
  attention.collect(prefix + ".msa", out);
  norm2.collect(prefix + ".ln2", out);
  mlp.fc1.collect(prefix + ".mlp.fc1", out);
  mlp.fc2.collect(prefix + ".mlp.fc2", out);
}

template <FloatElement T>
FactorizedEncoder<T> FactorizedEncoder<T>::create(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.model_dim;
  FactorizedEncoder enc;
  enc.config = config;
  enc.summary_token = normal_tensor<T>({1, 1, d}, 0.0, 0.02, rng).set_requires_grad(true);
  enc.spatial_table = normal_tensor<T>({config.max_spatial_positions, d}, 0.0, 0.02, rng).set_requires_grad(true);
  enc.temporal_table = normal_tensor<T>({config.max_temporal_positions, d}, 0.0, 0.02, rng).set_requires_grad(true);
  for (std::size_t i = 0; i < config.n_spatial_layers; ++i) {
    enc.spatial_layers.push_back(TransformerLayer<T>::create(d, config.n_heads, config.mlp_hidden(), rng));
  }
  enc.spatial_norm = LayerNormParams<T>::create(d);
  for (std::size_t i = 0; i < config.n_temporal_layers; ++i) {
    enc.temporal_layers.push_back(TransformerLayer<T>::create(d, config.n_heads, config.mlp_hidden(), rng));
  }
  enc.temporal_norm = LayerNormParams<T>::create(d);
  return enc;
}

template <FloatElement T>
Tensor<T> FactorizedEncoder<T>::forward(const TokenSequence<T>& seq) const {
  if (!seq.layout) throw UsageError("factorized encoder needs the token layout of the sequence");
  const TokenLayout layout = *seq.layout;
  const Tensor<T>& tokens = seq.tokens;
  const std::size_t d = config.model_dim;
  if (tokens.rank() != 3 || tokens.dim(1) != layout.count() || tokens.dim(2) != d) {
    throw DimensionError("encoder tokens " + shape_str(tokens.shape()) + " do not match layout " +
                         std::to_string(layout.n_t) + "x" + std::to_string(layout.n_h) + "x" +
                         std::to_string(layout.n_w) + " with D=" + std::to_string(d));
  }
  const std::size_t b = tokens.dim(0);
  const std::size_t clips = b * layout.n_t;

  // Spatial stage: one sequence per (batch, temporal index).
  TokenSequence<T> spatial{reshape(tokens, {clips, layout.spatial(), d}), layout};
  spatial = add_positional(spatial, spatial_table);
  Tensor<T> x = concat<T>({broadcast_to(summary_token, {clips, 1, d}), spatial.tokens}, 1);
  for (const auto& layer : spatial_layers) x = layer.forward(x);
  Tensor<T> summaries = spatial_norm.forward(reshape(slice(x, 1, 0, 1), {b, layout.n_t, d}));

  // Temporal stage over the summaries.
  Tensor<T> z = add_positional(TokenSequence<T>{summaries, layout}, temporal_table).tokens;
  for (const auto& layer : temporal_layers) z = layer.forward(z);
  return temporal_norm.forward(z);
}

template <FloatElement T>
void FactorizedEncoder<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".summary_token", summary_token});
  out.push_back({prefix + ".spatial_pos", spatial_table});
  out.push_back({prefix + ".temporal_pos", temporal_table});
  for (std::size_t i = 0; i < spatial_layers.size(); ++i) {
    spatial_layers[i].collect(prefix + ".spatial" + std::to_string(i), out);
  }
  spatial_norm.collect(prefix + ".spatial_norm", out);
  for (std::size_t i = 0; i < temporal_layers.size(); ++i) {
    temporal_layers[i].collect(prefix + ".temporal" + std::to_string(i), out);
  }
  temporal_norm.collect(prefix + ".temporal_norm", out);
}

template <FloatElement T>
FramewiseClassifier<T> FramewiseClassifier<T>::create(std::size_t dim, Rng& rng) {
  return {Linear<T>::xavier(dim, kNumAUs, rng)};
}

template <FloatElement T>
Tensor<T> FramewiseClassifier<T>::forward(const Tensor<T>& features, std::size_t t, std::size_t frames) const {
  if (features.rank() != 3) {
    throw DimensionError("classifier expects features [B,n_t,D], got " + shape_str(features.shape()));
  }
  const std::size_t b = features.dim(0);
  const std::size_t n_t = features.dim(1);
  if (n_t * t != frames) {
    throw DimensionError("classifier: " + std::to_string(n_t) + " temporal features x t=" + std::to_string(t) +
                         " != " + std::to_string(frames) + " frames");
  }
  Tensor<T> logits = reshape(head.forward(features), {b, n_t, 1, kNumAUs});
  return reshape(broadcast_to(logits, {b, n_t, t, kNumAUs}), {b, frames, kNumAUs});
}

template <FloatElement T>
void FramewiseClassifier<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  head.collect(prefix + ".fc", out);
}

template <FloatElement T>
VivitHead<T>::VivitHead(const TubeletConfig& tubelet, const EncoderConfig& encoder, std::size_t channels, Rng& rng)
    : tubelet_(TubeletEmbedding<T>::create(tubelet, channels, rng)),
      encoder_(FactorizedEncoder<T>::create(encoder, rng)),
      classifier_(FramewiseClassifier<T>::create(encoder.model_dim, rng)) {
  if (tubelet.embed_dim != encoder.model_dim) {
    throw ConfigError("tubelet embed_dim " + std::to_string(tubelet.embed_dim) + " must equal encoder model_dim " +
                      std::to_string(encoder.model_dim));
  }
}

template <FloatElement T>
Tensor<T> VivitHead<T>::forward(const VideoEmbedding<T>& v) const {
  return classifier_.forward(encoder_.forward(tubelet_.forward(v)), tubelet_.config.t, v.frames());
}

template <FloatElement T>
void VivitHead<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  tubelet_.collect(prefix + ".tubelet", out);
  encoder_.collect(prefix + ".encoder", out);
  classifier_.collect(prefix + ".classifier", out);
}

template <FloatElement T>
ParameterList<T> VivitHead<T>::parameters() const {
  ParameterList<T> out;
  collect("head", out);
  return out;
}

#define VAUT_INSTANTIATE(T)                                                                  \
  template struct TubeletEmbedding<T>;                                                       \
  template TokenSequence<T> add_positional<T>(const TokenSequence<T>&, const Tensor<T>&);    \
  template struct MultiHeadSelfAttention<T>;                                                 \
  template struct TransformerLayer<T>;                                                       \
  template struct FactorizedEncoder<T>;                                                      \
  template struct FramewiseClassifier<T>;                                                    \
  template class VivitHead<T>;

VAUT_INSTANTIATE(float)
VAUT_INSTANTIATE(double)
#undef VAUT_INSTANTIATE

}  // namespace vaut
