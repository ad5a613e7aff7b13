#include "vaut/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vaut {

void FocalLossConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("focal.alpha must be in (0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("focal.gamma must be non-negative");
  for (double w : au_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("focal.au_weights entries must be finite and >= 0");
  }
}

namespace {

// log σ(z), stable for large |z|.
double log_sigmoid(double z) { return z < 0 ? z - std::log1p(std::exp(z)) : -std::log1p(std::exp(-z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

template <FloatElement T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& labels, const FocalLossConfig& cfg) {
  cfg.validate();
  if (logits.shape() != labels.shape()) {
    throw DimensionError("focal loss: logits " + shape_str(logits.shape()) + " vs labels " +
                         shape_str(labels.shape()));
  }
  const std::size_t width = logits.dim(logits.rank() - 1);
  if (!cfg.au_weights.empty() && cfg.au_weights.size() != width) {
    throw ConfigError("focal.au_weights has " + std::to_string(cfg.au_weights.size()) + " entries, labels have " +
                      std::to_string(width));
  }
  const auto x = logits.values();
  const auto y = labels.values();
  const double gamma = cfg.gamma;

  // Per-entry loss and d(entry)/d(logit), weights folded in.
  std::vector<double> dlogit(x.size(), 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T label = y[i];
    if (label == T(kLabelUnknown)) continue;
    if (label != T(kLabelOn) && label != T(kLabelOff)) {
      throw UsageError("focal loss: label " + std::to_string(static_cast<double>(label)) + " at flat index " +
                       std::to_string(i) + " is not 0, 1 or -1");
    }
    const bool on = label == T(kLabelOn);
    const double s = on ? 1.0 : -1.0;
    const double alpha_t = on ? cfg.alpha : 1.0 - cfg.alpha;
    const double w = cfg.au_weights.empty() ? 1.0 : cfg.au_weights[i % width];
    const double z = s * static_cast<double>(x[i]);
    const double log_q = log_sigmoid(z);
    const double q = sigmoid(z);
    const double one_minus_q = sigmoid(-z);
    const double modulator = gamma == 0.0 ? 1.0 : std::pow(one_minus_q, gamma);
    total += -w * alpha_t * modulator * log_q;
    dlogit[i] = w * alpha_t * s * (gamma * q * modulator * log_q - modulator * one_minus_q);
    ++count;
  }
  if (count == 0) throw EmptyBatchError("focal loss: every label entry is masked (empty batch)");

  const double inv = 1.0 / static_cast<double>(count);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total * inv));
  record_op<T>("focal_loss", out, {logits, labels},
               [sx = logits.storage(), dlogit = std::move(dlogit), inv](std::span<const T> g) {
                 if (!sx->requires_grad) return;
                 sx->ensure_grad();
                 const double scale = static_cast<double>(g[0]) * inv;
                 for (std::size_t i = 0; i < dlogit.size(); ++i) {
                   sx->grad[i] += static_cast<T>(dlogit[i] * scale);
                 }
               });
  return out;
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer.lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum must be in [0, 1)");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("optimizer.max_grad_norm must be >= 0");
}

template <FloatElement T>
Sgd<T>::Sgd(ParameterList<T> params, const OptimizerConfig& config) : params_(std::move(params)), config_(config) {
  config_.validate();
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), T(0));
}

template <FloatElement T>
void Sgd<T>::step(double lr) {
  for (const auto& p : params_) {
    if (p.tensor.requires_grad() && !p.tensor.has_grad()) {
      throw UsageError("sgd step: trainable parameter " + p.name + " has no gradient");
    }
  }
  double clip = 1.0;
  if (config_.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (!p.tensor.requires_grad()) continue;
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.max_grad_norm) clip = config_.max_grad_norm / norm;
  }
  const T mu = static_cast<T>(config_.momentum);
  const T rate = static_cast<T>(lr);
  const T c = static_cast<T>(clip);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T> p = params_[k].tensor;
    if (!p.requires_grad()) continue;
    auto values = p.mutable_values();
    const auto grad = p.grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = mu * v[i] + c * grad[i];
      values[i] -= rate * v[i];
    }
  }
  zero_grad();
}

template <FloatElement T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) {
    if (p.tensor.has_grad()) p.tensor.zero_grad();
  }
}

CosineWarmRestarts::CosineWarmRestarts(double eta_min, double eta_max, std::size_t t_0, std::size_t t_mult)
    : eta_min_(eta_min), eta_max_(eta_max), t_mult_(t_mult), t_i_(t_0) {
  if (!(eta_min >= 0.0) || !(eta_max >= eta_min)) throw ConfigError("scheduler needs 0 <= eta_min <= eta_max");
  if (t_0 == 0 || t_mult == 0) throw ConfigError("scheduler t_0 and t_mult must be positive");
}

double CosineWarmRestarts::current() const {
  if (t_cur_ == 0) return eta_max_;
  const double phase = std::numbers::pi * static_cast<double>(t_cur_) / static_cast<double>(t_i_);
  return eta_min_ + 0.5 * (eta_max_ - eta_min_) * (1.0 + std::cos(phase));
}

double CosineWarmRestarts::next() {
  const double eta = current();
  ++steps_;
  if (++t_cur_ == t_i_) {
    t_cur_ = 0;
    t_i_ *= t_mult_;
  }
  return eta;
}

template <FloatElement T>
Tensor<T> order_invariant_mean(const std::vector<Tensor<T>>& members) {
  if (members.empty()) throw UsageError("ensemble mean needs at least one member");
  const Shape shape = members.front().shape();
  for (const auto& m : members) {
    if (m.shape() != shape) {
      throw DimensionError("ensemble members disagree on shape: " + shape_str(shape) + " vs " + shape_str(m.shape()));
    }
  }
  const std::size_t k = members.size();
  Tensor<T> out(shape);
  auto ov = out.mutable_values();
  std::vector<T> column(k);
  for (std::size_t i = 0; i < ov.size(); ++i) {
    for (std::size_t m = 0; m < k; ++m) column[m] = members[m].values()[i];
    std::sort(column.begin(), column.end());
    T spread = T(0);
    for (std::size_t m = 1; m < k; ++m) spread += column[m] - column[0];
    ov[i] = column[0] + spread / static_cast<T>(k);
  }
  return out;
}

template Tensor<float> focal_loss<float>(const Tensor<float>&, const Tensor<float>&, const FocalLossConfig&);
template Tensor<double> focal_loss<double>(const Tensor<double>&, const Tensor<double>&, const FocalLossConfig&);
template class Sgd<float>;
template class Sgd<double>;
template Tensor<float> order_invariant_mean<float>(const std::vector<Tensor<float>>&);
template Tensor<double> order_invariant_mean<double>(const std::vector<Tensor<double>>&);

}  // namespace vaut
