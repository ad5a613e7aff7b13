#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vaut/errors.hpp"

namespace vaut {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

template <typename T>
concept FloatElement = std::same_as<T, float> || std::same_as<T, double>;

template <FloatElement T>
constexpr DType dtype_of() {
  return std::same_as<T, float> ? DType::kFloat32 : DType::kFloat64;
}

template <FloatElement T>
struct TensorStorage {
  Shape shape;
  std::vector<T> values;
  // Empty until the first gradient arrives; then sized like `values`.
  std::vector<T> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

/// Dense row-major array with optional gradient tracking.
///
/// A Tensor is a handle: copies share the underlying storage, the way
/// parameters are shared between a model and the tape that recorded them.
/// Use clone() for an independent copy.
template <FloatElement T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }

  bool defined() const noexcept { return storage_ != nullptr; }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return storage_->values.size(); }

  std::span<const T> values() const { return storage_->values; }
  /// Writing through this span bypasses the tape; only do it outside a
  /// recorded forward pass (initialization, optimizer updates, tests).
  std::span<T> mutable_values() { return storage_->values; }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  /// Gradient as a standalone tensor (zeros when none has been computed).
  Tensor grad_tensor() const;

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }
  const std::shared_ptr<TensorStorage<T>>& storage() const { return storage_; }

 private:
  std::shared_ptr<TensorStorage<T>> storage_;
};

/// Append-only record of the differentiable ops executed on this thread.
///
/// Each thread owns one tape per element type. backward() walks it once in
/// reverse order and then clears it.
template <FloatElement T>
class Tape {
 public:
  using StoragePtr = std::shared_ptr<TensorStorage<T>>;
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  struct Node {
    std::string_view op;
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    BackwardFn backward;
  };

  static Tape& current();

  void record(std::string_view op, std::vector<StoragePtr> inputs, StoragePtr output,
              BackwardFn fn);
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Runs every reachable backward rule once, newest first, then clears.
  /// Returns the number of nodes whose rule ran.
  std::size_t run_backward();

 private:
  std::vector<Node> nodes_;
};

bool grad_enabled();

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Records `output` as produced from `inputs` when any input tracks
/// gradients. `fn` receives d(loss)/d(output) and must accumulate into the
/// grads of those inputs that require them.
template <FloatElement T>
void record_op(std::string_view op, Tensor<T>& output, const std::vector<Tensor<T>>& inputs,
               typename Tape<T>::BackwardFn fn);

/// Seeds d(loss)/d(loss) = 1 and propagates through the current tape.
/// Gradients accumulate into existing grad buffers.
template <FloatElement T>
void backward(const Tensor<T>& loss);

}  // namespace vaut
