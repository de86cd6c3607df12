#include "sarc/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sarc/error.hpp"

namespace sarc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
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
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}
}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor() : BasicTensor(Shape{}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : node_(std::make_shared<detail::Node<T>>()) {
  check_extents(shape);
  node_->value.assign(shape_numel(shape), T(0));
  node_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<detail::Node<T>>()) {
  check_extents(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::size_t BasicTensor<T>::extent(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() requires a single element, shape is " + shape_str(shape()));
  }
  return node_->value[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() requires a scalar loss, shape is " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  using NodePtr = detail::Node<T>*;
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      NodePtr p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (NodePtr n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr n = *it;
    if (!n->is_leaf() && !n->grad.empty()) n->backward(*n);
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), node_->value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor t(shape(), node_->value);
  t.set_requires_grad(requires_grad());
  return t;
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  for (T v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  BasicTensor t;
  t.node_ = std::move(node);
  return t;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace sarc
