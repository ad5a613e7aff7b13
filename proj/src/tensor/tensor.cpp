#include "vaut/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace vaut {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

thread_local bool t_grad_enabled = true;

}  // namespace

template <FloatElement T>
Tensor<T>::Tensor(Shape shape, T fill) : storage_(std::make_shared<TensorStorage<T>>()) {
  check_extents(shape);
  storage_->values.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
}

template <FloatElement T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : storage_(std::make_shared<TensorStorage<T>>()) {
  check_extents(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
}

template <FloatElement T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return storage_->shape[axis];
}

template <FloatElement T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return storage_->values[0];
}

template <FloatElement T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  storage_->requires_grad = flag;
  return *this;
}

template <FloatElement T>
std::span<T> Tensor<T>::mutable_grad() {
  storage_->ensure_grad();
  return storage_->grad;
}

template <FloatElement T>
void Tensor<T>::zero_grad() {
  std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <FloatElement T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(storage_->shape, storage_->values);
}

template <FloatElement T>
Tensor<T> Tensor<T>::grad_tensor() const {
  if (!has_grad()) return Tensor(storage_->shape, T(0));
  return Tensor(storage_->shape, storage_->grad);
}

template <FloatElement T>
Tape<T>& Tape<T>::current() {
  thread_local Tape tape;
  return tape;
}

template <FloatElement T>
void Tape<T>::record(std::string_view op, std::vector<StoragePtr> inputs, StoragePtr output,
                     BackwardFn fn) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(fn)});
}

template <FloatElement T>
std::size_t Tape<T>::run_backward() {
  std::size_t visited = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
    ++visited;
  }
  nodes_.clear();
  return visited;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <FloatElement T>
void record_op(std::string_view op, Tensor<T>& output, const std::vector<Tensor<T>>& inputs,
               typename Tape<T>::BackwardFn fn) {
  if (!grad_enabled()) return;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return;
  output.set_requires_grad(true);
  std::vector<typename Tape<T>::StoragePtr> storages;
  storages.reserve(inputs.size());
  for (const auto& t : inputs) storages.push_back(t.storage());
  Tape<T>::current().record(op, std::move(storages), output.storage(), std::move(fn));
}

template <FloatElement T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that does not depend on any trainable tensor");
  }
  loss.storage()->ensure_grad();
  loss.storage()->grad[0] += T(1);
  Tape<T>::current().run_backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void record_op<float>(std::string_view, Tensor<float>&, const std::vector<Tensor<float>>&,
                               Tape<float>::BackwardFn);
template void record_op<double>(std::string_view, Tensor<double>&, const std::vector<Tensor<double>>&,
                                Tape<double>::BackwardFn);
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace vaut
