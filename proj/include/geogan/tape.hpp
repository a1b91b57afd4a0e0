#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "geogan/tensor.hpp"

namespace geogan {

template <typename T>
class Tape;

// One recorded operation (or leaf). Owned by the tape; creation order is a
// topological order by construction, so backward is a single reverse sweep.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // reaches some requires_grad leaf
  std::function<void(Node<T>&)> backward;
  const char* op = "leaf";

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad.reset(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.numel() == value.numel() && grad.numel() > 0; }
};

// Non-owning handle into a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Node<T>* n, Tape<T>* t) : node_(n), tape_(t) {}

  bool valid() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  bool needs_grad() const { return node_->needs_grad; }

  Node<T>* node() const { return node_; }
  Tape<T>* tape() const { return tape_; }

 private:
  Node<T>* node_ = nullptr;
  Tape<T>* tape_ = nullptr;
};

template <typename T>
class Tape {
 public:
  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    Node<T>& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.needs_grad = requires_grad;
    return Var<T>(&n, this);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Record an op node. `bwd` reads node.grad and accumulates into parents.
  template <typename Bwd>
  Var<T> make(Tensor<T> value, std::initializer_list<Var<T>> parents, Bwd&& bwd,
              const char* op) {
    bool needs = false;
    for (const Var<T>& p : parents) needs = needs || p.node()->needs_grad;
    Node<T>& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = needs;
    n.op = op;
    if (needs) n.backward = std::forward<Bwd>(bwd);
    if (check_finite && !n.value.all_finite())
      throw NumericError(std::string("non-finite values produced by op '") + op + "'");
    return Var<T>(&n, this);
  }

  // Reverse sweep from a scalar loss. Each node's backward runs at most once.
  void backward(const Var<T>& loss) {
    if (!loss.valid() || nodes_.empty())
      throw StateError("backward: no recorded graph");
    if (loss.value().numel() != 1)
      throw ValidationError("backward: loss must be scalar, got shape " +
                            Tensor<T>::shape_str(loss.shape()));
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = *it;
      if (!n.backward || !n.needs_grad || !n.has_grad()) continue;
      n.backward(n);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Debug NaN/Inf trap for every produced value.
  bool check_finite = false;

  // Kink bookkeeping used by the finite-difference checker: when recording,
  // ReLU-family ops append the sign pattern of their inputs and flag any
  // element within `kink_margin` of the kink.
  bool record_kinks = false;
  double kink_margin = 0.0;
  bool kink_hit = false;
  std::vector<std::uint8_t> kink_signature;

 private:
  std::deque<Node<T>> nodes_;  // deque: stable node addresses
};

}  // namespace geogan
