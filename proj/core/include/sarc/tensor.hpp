#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sarc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One recorded value in the autodiff graph. Ops append a node whose
// `backward` closure reads `grad` and accumulates into the parents.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

}  // namespace detail

// Dense row-major array with optional gradient tracking.
//
// A BasicTensor is a handle: copies share the same storage and gradient, the
// way parameters are shared between a model and its optimizer. Use clone()
// for an independent copy. Every forward op on tracked inputs records a node;
// backward() walks the recorded graph in reverse topological order.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  // Rank-0 scalar holding zero.
  BasicTensor();
  // Zero-filled tensor of the given shape.
  explicit BasicTensor(Shape shape);
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor full(Shape shape, T value);
  static BasicTensor scalar(T value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  T& at(std::size_t i) { return node_->value.at(i); }
  T at(std::size_t i) const { return node_->value.at(i); }
  // Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Reverse-mode pass from this scalar. Gradients of leaf tensors accumulate
  // across calls; gradients of intermediate nodes are recomputed each call.
  void backward() const;

  // New leaf that copies the values and does not track gradients.
  BasicTensor detach() const;
  // New leaf that copies values and keeps the requires_grad flag.
  BasicTensor clone() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(node_->value[i]);
    BasicTensor<U> t(shape(), std::move(out));
    t.set_requires_grad(requires_grad());
    return t;
  }

  bool shares_storage(const BasicTensor& other) const { return node_ == other.node_; }
  bool all_finite() const;

  // Graph plumbing for op implementations.
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static BasicTensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace sarc
