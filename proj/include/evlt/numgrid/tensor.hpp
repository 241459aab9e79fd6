#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "evlt/common/error.hpp"

namespace evlt::numgrid {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads `self.grad` and accumulates into the parents' grads.
  std::function<void(Node& self)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Shared handle to a dense row-major array that may participate in a
/// recorded computation. Copies share storage; use `clone()` for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<detail::Node<T>>()) {
    for (std::size_t d : shape) require(d > 0, "Tensor: extents must be positive, got " + shape_str(shape));
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<detail::Node<T>>()) {
    for (std::size_t d : shape) require(d > 0, "Tensor: extents must be positive, got " + shape_str(shape));
    require(shape_numel(shape) == data.size(),
            "Tensor: shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                " values, got " + std::to_string(data.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  static Tensor from_node(NodePtr n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return checked().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const { return checked().value.size(); }

  std::span<const T> data() const { return checked().value; }
  const T* ptr() const { return checked().value.data(); }
  T operator[](std::size_t i) const { return checked().value[i]; }

  /// Writable view. Only leaves (tensors not produced by an op) are mutable.
  std::span<T> mutable_data() {
    require(checked().parents.empty(), "Tensor: cannot mutate the output of a recorded op");
    return node_->value;
  }

  T item() const {
    require(numel() == 1, "Tensor::item on tensor of shape " + shape_str(shape()));
    return checked().value[0];
  }

  bool requires_grad() const { return checked().requires_grad; }
  Tensor& set_requires_grad(bool on) {
    require(checked().parents.empty(), "Tensor: requires_grad can only be set on leaves");
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return defined() && node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return checked().grad; }
  void zero_grad() { checked().grad.clear(); }

  const char* op_name() const { return checked().op; }

  Tensor clone() const { return Tensor(shape(), std::vector<T>(data().begin(), data().end())); }
  Tensor detach() const { return clone(); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(checked().value[i]);
    return Tensor<U>(shape(), std::move(out));
  }

  const NodePtr& node() const { return node_; }

 private:
  detail::Node<T>& checked() const {
    require(node_ != nullptr, "Tensor: use of undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

}  // namespace evlt::numgrid
