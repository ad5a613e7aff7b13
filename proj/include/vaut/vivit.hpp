#pragma once

#include <optional>
#include <vector>

#include "vaut/backbone.hpp"
#include "vaut/layers.hpp"

namespace vaut {

inline constexpr std::size_t kNumAUs = 12;

struct TubeletConfig {
  std::size_t t = 2;
  std::size_t h = 2;
  std::size_t w = 2;
  std::size_t embed_dim = 64;

  void validate() const;
};

struct EncoderConfig {
  std::size_t n_spatial_layers = 4;
  std::size_t n_temporal_layers = 4;
  std::size_t n_heads = 8;
  std::size_t model_dim = 64;
  double mlp_ratio = 4.0;
  std::size_t layer_budget = 8;
  std::size_t max_spatial_positions = 64;
  std::size_t max_temporal_positions = 256;

  void validate() const;
  std::size_t mlp_hidden() const;
};

/// Token grid factorization; tokens are ordered temporal-major, then rows,
/// then columns.
struct TokenLayout {
  std::size_t n_t = 0;
  std::size_t n_h = 0;
  std::size_t n_w = 0;

  std::size_t spatial() const { return n_h * n_w; }
  std::size_t count() const { return n_t * n_h * n_w; }
};

template <FloatElement T>
struct TokenSequence {
  Tensor<T> tokens;  // [B, N, D]
  std::optional<TokenLayout> layout;
};

/// Linear projection of non-overlapping t×h×w blocks of the embedding grid,
/// i.e. a 3-D convolution with kernel = stride = (t, h, w). The projection
/// weight rows are ordered (channel, dt, dy, dx).
template <FloatElement T>
struct TubeletEmbedding {
  TubeletConfig config;
  Linear<T> projection;

  static TubeletEmbedding create(const TubeletConfig& config, std::size_t channels, Rng& rng);
  TokenSequence<T> forward(const VideoEmbedding<T>& v) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Adds rows [0, N) of `table` ([L, D], L ≥ N) to every sequence.
template <FloatElement T>
TokenSequence<T> add_positional(const TokenSequence<T>& seq, const Tensor<T>& table);

template <FloatElement T>
struct MultiHeadSelfAttention {
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> output;
  std::size_t n_heads = 1;

  static MultiHeadSelfAttention create(std::size_t dim, std::size_t n_heads, Rng& rng);
  /// x [B, N, D] → [B, N, D]. When `attention` is given it receives the
  /// softmax weights [B, heads, N, N].
  Tensor<T> forward(const Tensor<T>& x, Tensor<T>* attention = nullptr) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <FloatElement T>
struct FeedForward {
  Linear<T> fc1;
  Linear<T> fc2;

  Tensor<T> forward(const Tensor<T>& x) const { return fc2.forward(gelu(fc1.forward(x))); }
};

/// Pre-norm transformer layer:
///   y = MSA(LN(z)) + z
///   z' = MLP(LN(y)) + y
template <FloatElement T>
struct TransformerLayer {
  LayerNormParams<T> norm1;
  MultiHeadSelfAttention<T> attention;
  LayerNormParams<T> norm2;
  FeedForward<T> mlp;

  static TransformerLayer create(std::size_t dim, std::size_t n_heads, std::size_t hidden, Rng& rng);
  Tensor<T> forward(const Tensor<T>& z, Tensor<T>* attention_weights = nullptr) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Spatial transformer per temporal index with a learned summary token,
/// followed by a temporal transformer over the summaries.
template <FloatElement T>
struct FactorizedEncoder {
  EncoderConfig config;
  Tensor<T> summary_token;   // [1, 1, D]
  Tensor<T> spatial_table;   // [max_spatial_positions, D], shared across time
  Tensor<T> temporal_table;  // [max_temporal_positions, D]
  std::vector<TransformerLayer<T>> spatial_layers;
  LayerNormParams<T> spatial_norm;
  std::vector<TransformerLayer<T>> temporal_layers;
  LayerNormParams<T> temporal_norm;

  static FactorizedEncoder create(const EncoderConfig& config, Rng& rng);
  /// tokens [B, N, D] with layout → per-temporal-index features [B, n_t, D].
  Tensor<T> forward(const TokenSequence<T>& tokens) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Maps features [B, n_t, D] to logits [B, n_t·t, 12], repeating each
/// temporal feature's logits across its t frames.
template <FloatElement T>
struct FramewiseClassifier {
  Linear<T> head;

  static FramewiseClassifier create(std::size_t dim, Rng& rng);
  Tensor<T> forward(const Tensor<T>& features, std::size_t t, std::size_t frames) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <FloatElement T>
class VivitHead {
 public:
  VivitHead(const TubeletConfig& tubelet, const EncoderConfig& encoder, std::size_t channels, Rng& rng);

  /// Embedding [B, T, C, E_h, E_w] → logits [B, T, 12].
  Tensor<T> forward(const VideoEmbedding<T>& v) const;

  void collect(const std::string& prefix, ParameterList<T>& out) const;
  ParameterList<T> parameters() const;

  TubeletEmbedding<T>& tubelet() { return tubelet_; }
  FactorizedEncoder<T>& encoder() { return encoder_; }
  FramewiseClassifier<T>& classifier() { return classifier_; }

 private:
  TubeletEmbedding<T> tubelet_;
  FactorizedEncoder<T> encoder_;
  FramewiseClassifier<T> classifier_;
};

}  // namespace vaut
