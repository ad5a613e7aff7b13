#include "vaut/backbone.hpp"

#include <cmath>

namespace vaut {

std::vector<std::size_t> generate_widths(const WidthRule& rule) {
  if (!(rule.w0 > 0) || !(rule.slope >= 0) || rule.depth == 0 || rule.quantum == 0) {
    throw ConfigError("width rule needs w0 > 0, slope >= 0, depth > 0, quantum > 0");
  }
  if (!(rule.multiplier > 1)) throw ConfigError("width rule multiplier must exceed 1");
  std::vector<std::size_t> widths;
  widths.reserve(rule.depth);
  const double q = static_cast<double>(rule.quantum);
  for (std::size_t j = 0; j < rule.depth; ++j) {
    const double raw = rule.w0 + rule.slope * static_cast<double>(j);
    const double exponent = std::round(std::log(raw / rule.w0) / std::log(rule.multiplier));
    const double snapped = std::round(rule.w0 * std::pow(rule.multiplier, exponent) / q) * q;
    if (snapped < q) throw ConfigError("width rule produced a zero width; raise w0 or lower quantum");
    widths.push_back(static_cast<std::size_t>(snapped));
  }
  if (widths_to_stages(widths).size() > kNumStages) {
    throw ConfigError("width rule produced more than 4 stages; lower the slope or raise the multiplier");
  }
  return widths;
}

std::vector<StageSpec> widths_to_stages(const std::vector<std::size_t>& widths) {
  std::vector<StageSpec> stages;
  for (std::size_t w : widths) {
    if (!stages.empty() && stages.back().width == w) {
      ++stages.back().depth;
    } else {
      stages.push_back({w, 1});
    }
  }
  return stages;
}

void BackboneConfig::validate() const {
  if (stem_width == 0 || group_width == 0) throw ConfigError("backbone stem_width and group_width must be positive");
  if (!(se_ratio > 0.0 && se_ratio <= 1.0)) throw ConfigError("backbone se_ratio must be in (0, 1]");
  if (n_frozen_stages > kNumStages) throw ConfigError("backbone n_frozen_stages must be in [0, 4]");
  for (std::size_t i = 0; i < kNumStages; ++i) {
    if (stage_depths[i] == 0 || stage_widths[i] == 0 || stage_strides[i] == 0) {
      throw ConfigError("backbone stage " + std::to_string(i + 1) + " has a zero depth, width or stride");
    }
    if (stage_widths[i] % group_width != 0) {
      throw ConfigError("backbone stage width " + std::to_string(stage_widths[i]) +
                        " not divisible by group_width " + std::to_string(group_width));
    }
    if (std::lround(static_cast<double>(stage_widths[i]) * se_ratio) < 1) {
      throw ConfigError("backbone se_ratio leaves zero squeeze channels at width " + std::to_string(stage_widths[i]));
    }
  }
}

void BackboneConfig::apply_width_rule(const WidthRule& rule) {
  const auto stages = widths_to_stages(generate_widths(rule));
  if (stages.size() != kNumStages) {
    throw ConfigError("width rule produced " + std::to_string(stages.size()) +
                      " stages; the backbone body needs exactly 4");
  }
  for (std::size_t i = 0; i < kNumStages; ++i) {
    stage_widths[i] = stages[i].width;
    stage_depths[i] = stages[i].depth;
  }
}

std::size_t BackboneConfig::total_stride() const {
  std::size_t s = 2;
  for (std::size_t v : stage_strides) s *= v;
  return s;
}

std::size_t norm_groups(std::size_t channels) {
  for (std::size_t g = std::min<std::size_t>(8, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

template <FloatElement T>
ConvNorm<T> ConvNorm<T>::create(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                                std::size_t groups, Rng& rng) {
  ConvNorm cn;
  cn.weight = kaiming_uniform<T>({c_out, c_in / groups, kernel, kernel}, (c_in / groups) * kernel * kernel, rng);
  cn.gamma = trainable<T>({c_out}, T(1));
  cn.beta = trainable<T>({c_out}, T(0));
  cn.options = {{stride, stride}, {kernel / 2, kernel / 2}, groups};
  return cn;
}

template <FloatElement T>
Tensor<T> ConvNorm<T>::forward(const Tensor<T>& x) const {
  return group_norm(conv2d(x, weight, options), norm_groups(weight.dim(0)), gamma, beta, T(1e-5));
}

template <FloatElement T>
void ConvNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".conv.weight", weight});
  out.push_back({prefix + ".norm.gamma", gamma});
  out.push_back({prefix + ".norm.beta", beta});
}

template <FloatElement T>
SqueezeExcite<T> SqueezeExcite<T>::create(std::size_t channels, double ratio, Rng& rng) {
  const auto squeezed = static_cast<std::size_t>(std::lround(static_cast<double>(channels) * ratio));
  if (squeezed < 1) throw ConfigError("squeeze-excitation ratio leaves zero channels");
  return {Linear<T>::kaiming(channels, squeezed, rng), Linear<T>::xavier(squeezed, channels, rng)};
}

template <FloatElement T>
Tensor<T> SqueezeExcite<T>::gate(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != reduce.in_features()) {
    throw DimensionError("squeeze-excitation expects [n," + std::to_string(reduce.in_features()) + ",h,w], got " +
                         shape_str(x.shape()));
  }
  Tensor<T> pooled = mean(x, {2, 3});
  return sigmoid(expand.forward(relu(reduce.forward(pooled))));
}

template <FloatElement T>
Tensor<T> SqueezeExcite<T>::forward(const Tensor<T>& x) const {
  Tensor<T> g = gate(x);
  return mul(x, reshape(g, {x.dim(0), x.dim(1), 1, 1}));
}

template <FloatElement T>
void SqueezeExcite<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  reduce.collect(prefix + ".reduce", out);
  expand.collect(prefix + ".expand", out);
}

template <FloatElement T>
BottleneckBlock<T> BottleneckBlock<T>::create(std::size_t c_in, std::size_t c_out, std::size_t stride,
                                              std::size_t group_width, double se_ratio, Rng& rng) {
  if (group_width == 0 || c_out % group_width != 0) {
    throw ConfigError("bottleneck width " + std::to_string(c_out) + " not divisible by group width " +
                      std::to_string(group_width));
  }
  BottleneckBlock b;
  b.reduce = ConvNorm<T>::create(c_in, c_out, 1, 1, 1, rng);
  b.grouped = ConvNorm<T>::create(c_out, c_out, 3, stride, c_out / group_width, rng);
  b.se = SqueezeExcite<T>::create(c_out, se_ratio, rng);
  b.restore = ConvNorm<T>::create(c_out, c_out, 1, 1, 1, rng);
  if (stride != 1 || c_in != c_out) b.shortcut = ConvNorm<T>::create(c_in, c_out, 1, stride, 1, rng);
  return b;
}

template <FloatElement T>
Tensor<T> BottleneckBlock<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != reduce.weight.dim(1)) {
    throw ConfigError("bottleneck block expects " + std::to_string(reduce.weight.dim(1)) + " input channels, got " +
                      shape_str(x.shape()));
  }
  Tensor<T> h = relu(reduce.forward(x));
  h = relu(grouped.forward(h));
  h = se.forward(h);
  h = restore.forward(h);
  const Tensor<T> residual = shortcut ? shortcut->forward(x) : x;
  return relu(add(h, residual));
}

template <FloatElement T>
void BottleneckBlock<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  reduce.collect(prefix + ".a", out);
  grouped.collect(prefix + ".b", out);
  se.collect(prefix + ".se", out);
  restore.collect(prefix + ".c", out);
  if (shortcut) shortcut->collect(prefix + ".proj", out);
}

template <FloatElement T>
void BottleneckBlock<T>::set_trainable(bool flag) {
  ParameterList<T> params;
  collect("", params);
  for (auto& p : params) p.tensor.set_requires_grad(flag);
}

template <FloatElement T>
Backbone<T>::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  stem_ = ConvNorm<T>::create(3, config_.stem_width, 3, 2, 1, rng);
  std::size_t c_in = config_.stem_width;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (std::size_t d = 0; d < config_.stage_depths[s]; ++d) {
      const std::size_t stride = d == 0 ? config_.stage_strides[s] : 1;
      stages_[s].push_back(BottleneckBlock<T>::create(c_in, config_.stage_widths[s], stride, config_.group_width,
                                                      config_.se_ratio, rng));
      c_in = config_.stage_widths[s];
    }
  }
  freeze_stages(config_.n_frozen_stages);
}

template <FloatElement T>
Tensor<T> Backbone<T>::features(const Tensor<T>& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw DimensionError("backbone expects frames [N,3,H,W], got " + shape_str(frames.shape()));
  }
  const std::size_t multiple = config_.total_stride();
  if (frames.dim(2) % multiple != 0 || frames.dim(3) % multiple != 0) {
    throw DimensionError("frame size " + std::to_string(frames.dim(2)) + "x" + std::to_string(frames.dim(3)) +
                         " must be a multiple of " + std::to_string(multiple));
  }
  Tensor<T> h = relu(stem_.forward(frames));
  for (const auto& stage : stages_) {
    for (const auto& block : stage) h = block.forward(h);
  }
  return h;
}

template <FloatElement T>
VideoEmbedding<T> Backbone<T>::forward(const Tensor<T>& frames, std::size_t batch) const {
  if (batch == 0 || frames.rank() != 4 || frames.dim(0) % batch != 0) {
    throw DimensionError("backbone: " + shape_str(frames.shape()) + " is not B·T frames for B=" +
                         std::to_string(batch));
  }
  Tensor<T> h = features(frames);
  return {reshape(h, {batch, frames.dim(0) / batch, h.dim(1), h.dim(2), h.dim(3)})};
}

template <FloatElement T>
void Backbone<T>::freeze_stages(std::size_t n_frozen) {
  if (n_frozen > kNumStages) {
    throw UsageError("freeze_stages: n_frozen must be in [0, 4], got " + std::to_string(n_frozen));
  }
  ParameterList<T> stem_params;
  stem_.collect("", stem_params);
  for (auto& p : stem_params) p.tensor.set_requires_grad(n_frozen == 0);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (auto& block : stages_[s]) block.set_trainable(s >= n_frozen);
  }
  config_.n_frozen_stages = n_frozen;
}

template <FloatElement T>
void Backbone<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  stem_.collect(prefix + ".stem", out);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].collect(prefix + ".s" + std::to_string(s + 1) + ".b" + std::to_string(b + 1), out);
    }
  }
}

template <FloatElement T>
ParameterList<T> Backbone<T>::parameters() const {
  ParameterList<T> out;
  collect("backbone", out);
  return out;
}

template struct ConvNorm<float>;
template struct ConvNorm<double>;
template struct SqueezeExcite<float>;
template struct SqueezeExcite<double>;
template struct BottleneckBlock<float>;
template struct BottleneckBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace vaut
