#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sparsecap/tensor.hpp"

namespace sparsecap {

// Additive bias for structurally blocked attention entries. Finite on purpose:
// exp(-1e4) underflows to zero in both precisions while every intermediate
// stays representable.
inline constexpr double kBlocked = 1e4;

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;  // empty until backward touches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{0});
    return grad;
  }
};

// Handle to a value in the computation record. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return leaf(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  // Only meaningful on leaves; interior values are fixed once computed.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  std::span<const T> grad() const { return node_->grad; }
  std::vector<T>& grad_buffer() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T{0}); }

  T item() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// While alive, operations on this thread record nothing (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

enum class UnaryKind { kSigmoid, kGelu, kAbs, kLog };

// --- operations (each records its backward rule when any input needs grad) --

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a · bᵀ for a [m×k], b [n×k].
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
// x [r×c] + bias [c], broadcast over rows.
template <typename T> Var<T> add_bias(const Var<T>& x, const Var<T>& bias);
template <typename T> Var<T> scale(const Var<T>& x, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& x, T offset);
template <typename T> Var<T> unary(const Var<T>& x, UnaryKind kind);
template <typename T> Var<T> sigmoid(const Var<T>& x) { return unary(x, UnaryKind::kSigmoid); }
template <typename T> Var<T> gelu(const Var<T>& x) { return unary(x, UnaryKind::kGelu); }
template <typename T> Var<T> abs(const Var<T>& x) { return unary(x, UnaryKind::kAbs); }
template <typename T> Var<T> log(const Var<T>& x) { return unary(x, UnaryKind::kLog); }
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

// softmax(logits + bias) along the last axis. `bias` has the shape of
// `logits` or is a single row broadcast to every row. A row in which every
// bias entry is <= -kBlocked raises DegenerateRowError.
template <typename T> Var<T> masked_softmax(const Var<T>& logits, const Var<T>& bias);

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

// Gathers rows of `table` [V×d].
template <typename T> Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids);

// Mean negative log-likelihood over the supervised rows of `logits` [N×V].
template <typename T>
Var<T> cross_entropy_mlm(const Var<T>& logits, std::span<const std::int32_t> targets,
                         std::span<const std::uint8_t> supervised);

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t row0, std::size_t nrows, std::size_t col0,
             std::size_t ncols);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
// Stacks `times` copies of x [r×c] vertically.
template <typename T> Var<T> repeat_rows(const Var<T>& x, std::size_t times);
// Copy of constant `base` with `block` written at (row0, col0); gradient flows
// to `block` only.
template <typename T>
Var<T> overlay(const Tensor<T>& base, const Var<T>& block, std::size_t row0, std::size_t col0);

// Reverse sweep from a scalar root. Leaf grads accumulate (+=); interior grads
// are reset on every call so repeated sweeps are reproducible.
template <typename T> void backward(const Var<T>& root);

// Nodes reachable from `root` that participate in differentiation, in
// topological order (inputs before consumers).
template <typename T> std::vector<Node<T>*> topological_order(const Var<T>& root);

}  // namespace sparsecap
