#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "vaut/gradcheck.hpp"
#include "vaut/pipeline.hpp"

namespace vaut {

namespace {

using T64 = Tensor<double>;

constexpr double kElementwiseTol = 1e-5;
constexpr double kTol = 1e-4;
constexpr double kEps = 1e-6;
constexpr double kKinkMargin = 1e-4;

T64 weighted_sum(const T64& y) {
  Rng rng(977);
  return sum(mul(y, normal_tensor<double>(y.shape(), 0.0, 1.0, rng)));
}

class Recorder {
 public:
  void add(const std::string& name, double tol, double err) {
    auto [it, fresh] = results_.try_emplace(name, GradcheckResult{name, err, tol});
    if (!fresh) it->second.error = std::max(it->second.error, err);
    if (fresh) order_.push_back(name);
  }
  void point(const std::string& name, double tol, const ScalarFn& f, const T64& x) {
    add(name, tol, finite_diff_check(f, x.clone(), kEps));
  }
  std::vector<GradcheckResult> take() {
    std::vector<GradcheckResult> out;
    for (const auto& n : order_) out.push_back(results_.at(n));
    return out;
  }

 private:
  std::map<std::string, GradcheckResult> results_;
  std::vector<std::string> order_;
};

bool clear_of_kinks(const std::function<void()>& forward) {
  NoGradGuard probe;
  ReluKinkMonitor monitor;
  forward();
  return monitor.min_abs_input() >= kKinkMargin;
}

std::vector<T64> tensors_of(const ParameterList<double>& params) {
  std::vector<T64> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed) {
  Rng rng(seed);
  Recorder rec;
  for (int trial = 0; trial < 3; ++trial) {
    const Shape shape{2, 3, 4};
    const std::size_t axis = static_cast<std::size_t>(rng.integer(0, 2));
    const T64 x = normal_tensor<double>(shape, 0, 1, rng);
    const T64 other = normal_tensor<double>(shape, 0, 1, rng);
    const T64 row = normal_tensor<double>({4}, 0, 1, rng);

    rec.point("add", kElementwiseTol, [&](const T64& p) { return weighted_sum(add(p, row)); }, x);
    rec.point("add", kElementwiseTol, [&](const T64& p) { return weighted_sum(add(x, p)); }, row);
    rec.point("sub", kElementwiseTol, [&](const T64& p) { return weighted_sum(sub(other, p)); }, x);
    rec.point("mul", kElementwiseTol, [&](const T64& p) { return weighted_sum(mul(p, row)); }, x);
    rec.point("mul", kElementwiseTol, [&](const T64& p) { return weighted_sum(mul(x, p)); }, row);
    rec.point("scale", kElementwiseTol, [&](const T64& p) { return weighted_sum(scale(p, -1.3)); }, x);
    T64 away = x.clone();
    for (auto& v : away.mutable_values()) v += v >= 0 ? 0.1 : -0.1;
    rec.point("relu", kElementwiseTol, [&](const T64& p) { return weighted_sum(relu(p)); }, away);
    rec.point("sigmoid", kElementwiseTol, [&](const T64& p) { return weighted_sum(sigmoid(p)); }, x);
    rec.point("gelu", kElementwiseTol, [&](const T64& p) { return weighted_sum(gelu(p)); }, x);
    rec.point("softmax", kTol, [&](const T64& p) { return weighted_sum(softmax(p, axis)); }, x);

    const T64 ma = normal_tensor<double>({2, 3, 4}, 0, 1, rng);
    const T64 mb = normal_tensor<double>({4, 5}, 0, 1, rng);
    rec.point("matmul", kTol, [&](const T64& p) { return weighted_sum(matmul(p, mb)); }, ma);
    rec.point("matmul", kTol, [&](const T64& p) { return weighted_sum(matmul(ma, p)); }, mb);

    const T64 img = normal_tensor<double>({2, 4, 5, 5}, 0, 1, rng);
    const T64 kernel = normal_tensor<double>({6, 2, 3, 3}, 0, 0.5, rng);
    const Conv2dOptions opts{{2, 1}, {1, 1}, 2};
    rec.point("conv2d", kTol, [&](const T64& p) { return weighted_sum(conv2d(p, kernel, opts)); }, img);
    rec.point("conv2d", kTol, [&](const T64& p) { return weighted_sum(conv2d(img, p, opts)); }, kernel);

    const T64 gamma = normal_tensor<double>({4}, 1, 0.3, rng);
    const T64 beta = normal_tensor<double>({4}, 0, 0.3, rng);
    rec.point("layer_norm", kTol, [&](const T64& p) { return weighted_sum(layer_norm(p, gamma, beta, 1e-5)); }, x);
    rec.point("layer_norm", kTol, [&](const T64& p) { return weighted_sum(layer_norm(x, p, beta, 1e-5)); }, gamma);
    rec.point("layer_norm", kTol, [&](const T64& p) { return weighted_sum(layer_norm(x, gamma, p, 1e-5)); }, beta);
    rec.point("group_norm", kTol, [&](const T64& p) { return weighted_sum(group_norm(p, 2, gamma, beta, 1e-5)); },
              img);
    rec.point("group_norm", kTol, [&](const T64& p) { return weighted_sum(group_norm(img, 2, p, beta, 1e-5)); },
              gamma);
    rec.point("group_norm", kTol, [&](const T64& p) { return weighted_sum(group_norm(img, 2, gamma, p, 1e-5)); },
              beta);

    rec.point("sum", kTol, [&](const T64& p) { return weighted_sum(sum(p, {axis}, true)); }, x);
    rec.point("mean", kTol, [&](const T64& p) { return weighted_sum(mean(p, {axis})); }, x);
    rec.point("reshape", kTol, [&](const T64& p) { return weighted_sum(reshape(p, {4, 6})); }, x);
    std::vector<std::size_t> perm{0, 1, 2};
    rng.shuffle(perm);
    rec.point("permute", kTol, [&](const T64& p) { return weighted_sum(permute(p, perm)); }, x);
    rec.point("transpose", kTol, [&](const T64& p) { return weighted_sum(transpose(p, 0, 2)); }, x);
    rec.point("concat", kTol, [&](const T64& p) { return weighted_sum(concat<double>({p, other, p}, axis)); }, x);
    rec.point("slice", kTol, [&](const T64& p) { return weighted_sum(slice(p, axis, 1, shape[axis])); }, x);
    rec.point("broadcast_to", kTol, [&](const T64& p) { return weighted_sum(broadcast_to(p, {3, 2, 3, 4})); }, x);

    T64 labels({2, 3, 4}, 0.0);
    for (auto& v : labels.mutable_values()) v = static_cast<double>(rng.integer(-1, 1));
    labels.mutable_values()[0] = 1;
    const FocalLossConfig focal{0.25, rng.uniform(0.0, 3.0), {}};
    rec.point("focal_loss", kTol, [&](const T64& p) { return focal_loss(p, labels, focal); }, x);
  }

  // Modules. Central differences are meaningless across a ReLU kink, so
  // redraw until every ReLU input keeps a margin well above the step.
  for (int attempt = 0; attempt < 64; ++attempt) {
    auto se = SqueezeExcite<double>::create(8, 0.25, rng);
    const T64 x = normal_tensor<double>({2, 8, 3, 3}, 0, 1, rng);
    if (!clear_of_kinks([&] { se.forward(x); })) continue;
    rec.point("squeeze_excite", kTol, [&](const T64& p) { return weighted_sum(se.forward(p)); }, x);
    ParameterList<double> params;
    se.collect("se", params);
    rec.add("squeeze_excite", kTol,
            finite_diff_check_params([&] { return weighted_sum(se.forward(x)); }, tensors_of(params), kEps, 0, rng));
    break;
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    auto block = BottleneckBlock<double>::create(4, 8, 2, 4, 0.25, rng);
    const T64 x = normal_tensor<double>({2, 4, 6, 6}, 0, 1, rng);
    if (!clear_of_kinks([&] { block.forward(x); })) continue;
    rec.point("bottleneck", kTol, [&](const T64& p) { return weighted_sum(block.forward(p)); }, x);
    ParameterList<double> params;
    block.collect("block", params);
    rec.add("bottleneck", kTol,
            finite_diff_check_params([&] { return weighted_sum(block.forward(x)); }, tensors_of(params), kEps, 8,
                                     rng));
    break;
  }
  {
    auto layer = TransformerLayer<double>::create(8, 2, 16, rng);
    const T64 z = normal_tensor<double>({1, 3, 8}, 0, 1, rng);
    rec.point("transformer_layer", kTol, [&](const T64& p) { return weighted_sum(layer.forward(p)); }, z);
    ParameterList<double> params;
    layer.collect("layer", params);
    rec.add("transformer_layer", kTol,
            finite_diff_check_params([&] { return weighted_sum(layer.forward(z)); }, tensors_of(params), kEps, 0,
                                     rng));
  }

  // Micro end-to-end model: backbone → tubelet (2,2,2) → 1+1 layers at D=8 → focal loss.
  {
    ModelConfig cfg;
    cfg.backbone.stem_width = 8;
    cfg.backbone.stage_widths = {8, 8, 8, 8};
    cfg.backbone.stage_depths = {1, 1, 1, 1};
    cfg.backbone.group_width = 4;
    cfg.backbone.stage_strides = {1, 2, 1, 1};
    cfg.backbone.n_frozen_stages = 0;
    cfg.tubelet = {2, 2, 2, 8};
    cfg.encoder.model_dim = 8;
    cfg.encoder.n_heads = 2;
    cfg.encoder.n_spatial_layers = 1;
    cfg.encoder.n_temporal_layers = 1;
    cfg.encoder.layer_budget = 2;
    cfg.encoder.mlp_ratio = 2;
    const FocalLossConfig focal;
    for (int attempt = 0; attempt < 64; ++attempt) {
      AUDetector<double> model(cfg, rng);
      const T64 clips = normal_tensor<double>({1, 4, 3, 16, 16}, 0, 1, rng);
      T64 labels({1, 4, kNumAUs}, 0.0);
      for (auto& v : labels.mutable_values()) v = static_cast<double>(rng.integer(-1, 1));
      labels.mutable_values()[0] = 1;
      if (!clear_of_kinks([&] { model.forward(clips); })) continue;
      const auto loss = [&] { return focal_loss(model.forward(clips), labels, focal); };
      rec.add("micro_model_params", kTol,
              finite_diff_check_params(loss, tensors_of(model.parameters()), kEps, 3, rng));
      rec.point("micro_model_input", kTol,
                [&](const T64& p) { return focal_loss(model.forward(p), labels, focal); }, clips);
      return rec.take();
    }
    rec.add("micro_model_params", kTol, std::numeric_limits<double>::infinity());
  }
  return rec.take();
}

}  // namespace vaut
