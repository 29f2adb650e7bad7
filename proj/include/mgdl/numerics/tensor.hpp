#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mgdl/errors.hpp"

namespace mgdl::num {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  bool is_leaf() const { return !backward; }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major float64 array of rank 1 or 2 with an optional place on the
/// gradient tape. Copies share the underlying node (handle semantics), so a
/// parameter tensor held in two containers is still one parameter.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape.empty() || shape.size() > 2)
      throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_str(shape));
    for (auto s : shape)
      if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    if (shape_size(shape) != data.size())
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    for (double v : data)
      if (!std::isfinite(v)) throw NumericError("non-finite value in tensor construction");
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    auto n = v.size();
    return Tensor({n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false) {
    std::vector<double> v;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged matrix literal");
      v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  // A rank-1 tensor reads as a single row.
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.back(); }
  bool is_scalar() const { return size() == 1; }

  std::span<const double> data() const { return node_->data; }
  // Direct writes bypass the tape; only meaningful on leaves (optimizer steps, finite differences).
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const {
    if (!is_scalar()) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  std::vector<double> to_vector() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Fresh leaf with a copy of the values.
  Tensor detach(bool requires_grad = false) const { return Tensor(shape(), node_->data, requires_grad); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

using BackwardFn = std::function<void(detail::Node&)>;

/// Creates the result of an operation. Parents are linked (and `backward`
/// retained) only when recording is enabled and some parent needs a gradient.
inline Tensor make_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                      BackwardFn backward, const char* op) {
  for (double v : data)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

/// Topologically ordered record of the operations reachable from a root.
/// Every node's parents precede it; each node appears once.
class Tape {
 public:
  static Tape record(const Tensor& root) {
    Tape tape;
    if (!root.requires_grad()) return tape;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    auto seen = [&](detail::Node* n) { return tape.marks_.count(n) != 0; };
    stack.emplace_back(root.node(), 0);
    tape.marks_.insert(root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node* parent = node->parents[next++].get();
        if (parent->requires_grad && !seen(parent)) {
          tape.marks_.insert(parent);
          stack.emplace_back(parent, 0);
        }
      } else {
        tape.nodes_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  const std::vector<detail::Node*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from the last node (the root). Leaf gradients accumulate;
  /// intermediate gradients are reset first so each sweep counts once.
  void run_backward() const {
    if (nodes_.empty()) return;
    for (auto* n : nodes_)
      if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    detail::Node* root = nodes_.back();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      detail::Node* n = *it;
      if (n->is_leaf()) continue;
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward(*n);
    }
  }

 private:
  std::vector<detail::Node*> nodes_;
  struct PtrHash {
    std::size_t operator()(const detail::Node* p) const noexcept { return std::hash<const void*>{}(p); }
  };
  std::unordered_set<detail::Node*, PtrHash> marks_;
};

/// Populates grads of every requires_grad tensor reachable from `loss`.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar())
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) throw UsageError("backward() on a tensor that is not on the tape");
  Tape::record(loss).run_backward();
}

}  // namespace mgdl::num
