#pragma once

#include <optional>
#include <vector>

#include "vaut/layers.hpp"

namespace vaut {

/// Label codes of a ternary AU target.
inline constexpr int kLabelOff = 0;
inline constexpr int kLabelOn = 1;
inline constexpr int kLabelUnknown = -1;

struct FocalLossConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  /// Optional per-AU multipliers (size must match the last label axis).
  std::vector<double> au_weights;

  void validate() const;
};

/// Mean focal loss over entries whose label is not kLabelUnknown.
///   p_t = σ(x) for label 1, 1 − σ(x) for label 0
///   entry = −α_t (1 − p_t)^γ log p_t
/// Throws EmptyBatchError when every entry is masked.
template <FloatElement T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& labels, const FocalLossConfig& cfg);

class EmptyBatchError : public UsageError {
 public:
  using UsageError::UsageError;
};

struct OptimizerConfig {
  double lr = 0.01;
  double momentum = 0.9;
  /// Global gradient-norm clip; 0 disables it.
  double max_grad_norm = 0.0;

  void validate() const;
};

/// SGD with heavy-ball momentum: v ← μ·v + g; p ← p − lr·v.
/// Parameters with requires_grad == false are never touched.
template <FloatElement T>
class Sgd {
 public:
  Sgd(ParameterList<T> params, const OptimizerConfig& config);

  /// Applies one update with learning rate `lr`, then zeroes the grads.
  /// A trainable parameter without a grad buffer is a UsageError.
  void step(double lr);
  void zero_grad();

  const ParameterList<T>& parameters() const { return params_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  ParameterList<T> params_;
  OptimizerConfig config_;
  std::vector<std::vector<T>> velocity_;
};

struct SchedulerConfig {
  double eta_min = 0.0;
  /// Peak rate; unset means "use the optimizer's lr".
  std::optional<double> eta_max;
  std::size_t t_0 = 100;
  std::size_t t_mult = 2;
};

/// Cosine annealing with warm restarts, stepped once per optimizer step.
class CosineWarmRestarts {
 public:
  CosineWarmRestarts(double eta_min, double eta_max, std::size_t t_0, std::size_t t_mult);

  /// η = η_min + ½(η_max − η_min)(1 + cos(π·T_cur/T_i)) at the current state.
  double current() const;
  /// Returns current() and advances; restarts when T_cur reaches T_i.
  double next();

  double eta_min() const { return eta_min_; }
  double eta_max() const { return eta_max_; }
  std::size_t t_cur() const { return t_cur_; }
  std::size_t t_i() const { return t_i_; }
  std::size_t steps() const { return steps_; }

 private:
  double eta_min_;
  double eta_max_;
  std::size_t t_mult_;
  std::size_t t_cur_ = 0;
  std::size_t t_i_;
  std::size_t steps_ = 0;
};

/// Elementwise mean of equally shaped tensors that is exact for identical
/// members and bit-identical under any reordering: each element is
/// v_min + Σ (v_i − v_min) / k over the sorted member values.
template <FloatElement T>
Tensor<T> order_invariant_mean(const std::vector<Tensor<T>>& members);

}  // namespace vaut
