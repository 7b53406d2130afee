#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mstnet/errors.hpp"

namespace mstnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename Real>
struct Node;

// Backward rule: reads the node's own grad and accumulates into its parents.
template <typename Real>
using BackwardFn = std::function<void(const Node<Real>&)>;

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<Real> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  }
};

template <typename Real>
class Tape;

namespace detail {
template <typename Real>
Tape<Real>*& active_tape() {
  thread_local Tape<Real>* tape = nullptr;
  return tape;
}
}  // namespace detail

// Handle to a dense row-major array. Copies share the node; ops always
// allocate fresh storage for their outputs.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node<Real>>()) {
    node_->data.assign(shape_size(shape), Real(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false)
      : node_(std::make_shared<Node<Real>>()) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_size(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, Real value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }

  static Tensor scalar(Real value, bool requires_grad = false) {
    return Tensor(Shape{1}, {value}, requires_grad);
  }

  static Tensor from_node(std::shared_ptr<Node<Real>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<Real> data() { return node_->data; }
  std::span<const Real> data() const { return node_->data; }
  const std::vector<Real>& values() const { return node_->data; }

  Real item() const {
    if (size() != 1) {
      throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
  }

  Real& operator[](std::size_t i) { return node_->data[i]; }
  Real operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values, off the tape.
  Tensor detach() const {
    return Tensor(node_->shape, node_->data, false);
  }

  Node<Real>* node() const { return node_.get(); }
  const std::shared_ptr<Node<Real>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

// Ordered record of differentiable operations. Nodes are appended in
// creation order, which is a topological order of the graph.
template <typename Real>
class Tape {
 public:
  void record(std::shared_ptr<Node<Real>> node) {
    nodes_.push_back(std::move(node));
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

  void backward(const Tensor<Real>& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw TapeError("backward() needs a scalar loss, got shape " +
                      (loss.defined() ? shape_str(loss.shape()) : "<none>"));
    }
    if (consumed_) {
      throw TapeError("backward() called twice on the same tape; reset first");
    }
    const auto it = std::find_if(
        nodes_.begin(), nodes_.end(),
        [&](const auto& n) { return n.get() == loss.node(); });
    const bool is_leaf = loss.requires_grad() && !loss.node()->backward;
    if (it == nodes_.end() && !is_leaf) {
      throw TapeError("loss was not produced on the active tape");
    }
    consumed_ = true;

    for (auto& n : nodes_) {
      n->ensure_grad();
      for (auto& p : n->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
    }
    Node<Real>* root = loss.node();
    root->ensure_grad();
    root->grad[0] += Real(1);

    for (auto r = nodes_.rbegin(); r != nodes_.rend(); ++r) {
      if ((*r)->backward) (*r)->backward(**r);
    }
  }

 private:
  std::vector<std::shared_ptr<Node<Real>>> nodes_;
  bool consumed_ = false;
};

// Makes a tape the recording target for the current thread while alive.
template <typename Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& tape) : prev_(detail::active_tape<Real>()) {
    detail::active_tape<Real>() = &tape;
  }
  ~TapeScope() { detail::active_tape<Real>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* prev_;
};

template <typename Real>
Tape<Real>* active_tape() {
  return detail::active_tape<Real>();
}

template <typename Real>
void backward(const Tensor<Real>& loss) {
  Tape<Real>* tape = active_tape<Real>();
  if (!tape) throw TapeError("backward() without an active tape");
  tape->backward(loss);
}

namespace detail {

// Builds an op result. The node is recorded only when a tape is active and
// some input participates in gradient flow.
template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> values,
                         std::initializer_list<Tensor<Real>> inputs,
                         BackwardFn<Real> rule) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  Tape<Real>* tape = active_tape<Real>();
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (tape && needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(rule);
    tape->record(node);
  }
  return Tensor<Real>::from_node(std::move(node));
}

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> values,
                         const std::vector<Tensor<Real>>& inputs,
                         BackwardFn<Real> rule) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  Tape<Real>* tape = active_tape<Real>();
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (tape && needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(rule);
    tape->record(node);
  }
  return Tensor<Real>::from_node(std::move(node));
}

// Grad buffer of a parent, or nullptr if it does not take gradients.
template <typename Real>
Real* parent_grad(const Node<Real>& n, std::size_t i) {
  Node<Real>* p = n.parents[i].get();
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

}  // namespace detail
}  // namespace mstnet
