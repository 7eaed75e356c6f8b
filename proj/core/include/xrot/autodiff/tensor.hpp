#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace xrot::ad {

using Shape = std::vector<std::size_t>;

/// Allocator returning 64-byte aligned blocks. Vectorized kernels choose
/// their loop split from the pointer alignment, so a fixed alignment keeps
/// results bitwise reproducible from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Storage of tensor values and gradients.
template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raises ShapeMismatch naming both shapes.
[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b);

/// Thread-local switch for graph recording. While disabled, ops compute
/// values only and results never require grad.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's gradient and accumulates into the parents' grads.
  std::function<void(std::span<const T>)> backward;

  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array that records the operations producing it so that
/// gradients can be propagated back with `backward()`. Copies are shallow:
/// two Tensor handles may refer to the same storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using BackwardFn = std::function<void(std::span<const T>)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  /// Throws ShapeMismatch when data.size() != numel(shape).
  static Tensor from_data(Shape shape, Buffer<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  /// Creates an op result. `backward` is kept only when recording is enabled
  /// and at least one input requires grad; it must accumulate into the
  /// inputs' grad buffers (see `grad_buffer`).
  static Tensor make_result(Shape shape, Buffer<T> data, std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  Buffer<T>& storage() { return node_->data; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  /// Gradient view; empty when no gradient has been accumulated yet.
  std::span<const T> grad() const { return has_grad() ? std::span<const T>(node_->grad) : std::span<const T>(); }
  /// Mutable gradient buffer, zero-allocated on first use.
  std::span<T> grad_buffer() const { return node_->grad_buffer(); }
  void zero_grad();

  /// Value of a one-element tensor. Throws NotScalar otherwise.
  T item() const;

  /// Reverse-mode sweep from this one-element tensor. Leaf gradients
  /// accumulate across calls; interior gradients are recomputed each call.
  /// Throws NotScalar or GraphCycle.
  void backward();

  /// Copy of the values with no grad and no history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  detail::Node<T>* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace xrot::ad
