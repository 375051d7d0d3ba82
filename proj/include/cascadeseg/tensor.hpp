#ifndef CASCADESEG_TENSOR_HPP
#define CASCADESEG_TENSOR_HPP

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cascadeseg/common.hpp"

namespace cseg {

namespace detail {
inline thread_local bool autograd_enabled = true;
}

/// Disables graph construction inside a scope (inference / evaluation paths).
struct NoGradGuard {
  bool previous;
  NoGradGuard() : previous(detail::autograd_enabled) { detail::autograd_enabled = false; }
  ~NoGradGuard() { detail::autograd_enabled = previous; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool autograd_enabled() { return detail::autograd_enabled; }

/// Dense n-d tensor with reverse-mode automatic differentiation. A tensor is
/// a shared handle to a graph node; operations record their inputs and a
/// closure that scatters the node's gradient into the inputs' gradients.
/// Nodes own their parents (never their consumers), so graphs form acyclic
/// ownership and die with the last downstream handle.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Vec = Eigen::Array<S, Eigen::Dynamic, 1>;

  struct Node {
    std::vector<Index> shape;
    Vec value;
    Vec grad;  // empty until a gradient is first accumulated
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<Index> shape, bool requires_grad = false) {
    auto node = std::make_shared<Node>();
    node->value = Vec::Zero(count(shape));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_values(std::vector<Index> shape, Vec values, bool requires_grad = false) {
    if (values.size() != count(shape))
      throw std::invalid_argument("Tensor: value count does not match shape");
    auto node = std::make_shared<Node>();
    node->value = std::move(values);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  /// Converts to another scalar type as a constant (no gradient tracking).
  /// Same-type casts share the underlying node.
  template <typename T>
  Tensor<T> cast_to() const {
    if constexpr (std::is_same_v<T, S>) {
      return *this;
    } else {
      return Tensor<T>::from_values(node_->shape,
                                    node_->value.template cast<T>().eval(), false);
    }
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<Index>& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Index size() const { return node_->value.size(); }
  Vec& value() { return node_->value; }
  const Vec& value() const { return node_->value; }
  Vec& grad() { return node_->grad; }
  const Vec& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  bool requires_grad() const { return node_->requires_grad; }
  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

  void clear_grad() { node_->grad.resize(0); }

  /// Allocates (zeroed) the gradient buffer if absent.
  static void ensure_grad(Node& n) {
    if (n.grad.size() == 0) n.grad = Vec::Zero(n.value.size());
  }

  /// Reverse-mode sweep from a scalar. Processes nodes in reverse post-order
  /// (every node before its inputs), which is deterministic for a fixed graph.
  void backward() const {
    if (!node_ || node_->value.size() != 1)
      throw std::logic_error("backward: tensor must be a defined scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    ensure_grad(*node_);
    node_->grad(0) = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop && n->grad.size() > 0) n->backprop(*n);
    }
  }

 private:
  static Index count(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: dimensions must be positive");
      n *= d;
    }
    return n;
  }

  std::shared_ptr<Node> node_;
};

/// Named, optionally frozen leaf tensor with its momentum buffer.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;
  bool trainable = true;
  typename Tensor<S>::Vec velocity;  // lazily sized on first update
};

/// One SGD-with-momentum update: v <- m v + g, theta <- theta - lr v, applied
/// to trainable parameters only. Gradients of all parameters are cleared
/// afterwards. A trainable parameter with no accumulated gradient indicates a
/// wiring bug and raises.
template <typename S>
inline void sgd_momentum_step(std::vector<Parameter<S>>& params, double lr, double momentum) {
  for (auto& p : params) {
    if (!p.trainable) {
      p.tensor.clear_grad();
      continue;
    }
    if (!p.tensor.has_grad())
      throw std::logic_error("sgd_momentum_step: no gradient for trainable parameter " + p.name);
    if (p.velocity.size() == 0) p.velocity = Tensor<S>::Vec::Zero(p.tensor.size());
    p.velocity = static_cast<S>(momentum) * p.velocity + p.tensor.grad();
    p.tensor.value() -= static_cast<S>(lr) * p.velocity;
    p.tensor.clear_grad();
  }
}

}  // namespace cseg

#endif
