#pragma once

// Minimal reverse-mode autodiff over row-major 2-D float matrices.
//
// Every model in the pipeline processes one sequence at a time, so a
// sequence is a [length, dim] matrix and a pooled vector is [1, dim].
// Gradients are accumulated across examples of a mini-batch by calling
// backward() on each example's loss before the optimizer step.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cspeech/error.hpp"

namespace cspeech::nn {

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<float> value;
  std::vector<float> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

class Tensor {
 public:
  Tensor() = default;

  Tensor(int rows, int cols, float fill = 0.0f, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->rows = rows;
    node_->cols = cols;
    node_->value.assign(static_cast<size_t>(rows) * cols, fill);
    node_->requires_grad = requires_grad;
  }

  Tensor(int rows, int cols, std::vector<float> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (values.size() != static_cast<size_t>(rows) * cols) {
      throw DimensionError("tensor value count does not match shape");
    }
    node_->rows = rows;
    node_->cols = cols;
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(float v) { return Tensor(1, 1, v); }

  bool defined() const { return static_cast<bool>(node_); }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  float& at(int r, int c) { return node_->value[static_cast<size_t>(r) * node_->cols + c]; }
  float at(int r, int c) const { return node_->value[static_cast<size_t>(r) * node_->cols + c]; }
  float item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar tensor");
    return node_->value[0];
  }

  std::vector<float>& values() { return node_->value; }
  const std::vector<float>& values() const { return node_->value; }
  std::vector<float>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<float>& grad() const { return node_->grad; }

  std::span<const float> row(int r) const {
    return {node_->value.data() + static_cast<size_t>(r) * node_->cols,
            static_cast<size_t>(node_->cols)};
  }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0f); }

  // Detached copy sharing no graph history.
  Tensor detach() const { return Tensor(rows(), cols(), node_->value, false); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  // Runs reverse-mode accumulation from this scalar.
  void backward() const;

  static Tensor from_node(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds a result node wired to its parents when any parent needs gradients.
inline Tensor make_result(int rows, int cols, std::vector<float> value,
                          std::initializer_list<Tensor> parents,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& p : parents) n->parents.push_back(p.shared());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor::from_node(std::move(n));
}

inline Tensor make_result_multi(int rows, int cols, std::vector<float> value,
                                const std::vector<Tensor>& parents,
                                std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& p : parents) n->parents.push_back(p.shared());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor::from_node(std::move(n));
}

inline void accumulate(Node& target, std::span<const float> delta) {
  if (!target.requires_grad) return;
  target.ensure_grad();
  for (size_t i = 0; i < delta.size(); ++i) target.grad[i] += delta[i];
}

}  // namespace detail

inline void Tensor::backward() const {
  if (size() != 1) throw DimensionError("backward() requires a scalar loss");
  if (!node_->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are not needed after the pass; free them so a node
  // reused by a later example (parameters) keeps only its own buffer.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace cspeech::nn
