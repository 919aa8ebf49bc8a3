// Copyright (c) 2026 The adafe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over dense tensors. Every op appends a node
// to the tape in execution order; backward() walks the tape in exact reverse
// order, so the tape is a topological order by construction.

#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adafe/error.hpp"

namespace adafe::grad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Name of an op whose backward pass is deliberately corrupted (scaled by
// 1.5). Empty means no fault. Only the gradient-check tooling sets this.
inline std::string& injected_fault() {
  static std::string op;
  return op;
}

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const { return tape->node(id).shape; }
  std::size_t size() const { return tape->node(id).value.size(); }
  const std::vector<T>& value() const { return tape->node(id).value; }
  bool requires_grad() const { return tape->node(id).requires_grad; }
};

template <class T>
struct Node {
  using Backward = std::function<void(Tape<T>&, std::size_t self)>;

  const char* op = "leaf";
  std::string name;  // leaves only
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into this node
  bool requires_grad = false;
  bool is_leaf = true;
  Backward backward;
};

struct BackwardReport {
  std::vector<std::string> disconnected;  // trainable leaves that received no gradient
};

template <class T>
class Tape {
 public:
  // When set, intermediate values and saved buffers are dropped as soon as
  // backward has consumed them. Leaf values and gradients stay readable.
  bool release_intermediates = false;

  Var<T> leaf(Shape shape, std::vector<T> values, bool requires_grad, std::string name = {}) {
    require(values.size() == numel(shape), Errc::kShapeMismatch,
            [&] { return "leaf " + name + " has " + std::to_string(values.size()) + " values for " + shape_str(shape); });
    Node<T> n;
    n.name = std::move(name);
    n.shape = std::move(shape);
    n.value = std::move(values);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), false);
  }

  // Appends an op node; fn runs during backward only when some input needed
  // a gradient.
  Var<T> push(const char* op, Shape shape, std::vector<T> value, bool requires_grad,
              typename Node<T>::Backward fn) {
    Node<T> n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = false;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Node<T>& node(std::size_t id) { return nodes_[id]; }
  const Node<T>& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node, zero-initialised on first touch.
  std::vector<T>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.empty() ? numel(n.shape) : n.value.size(), T(0));
    return n.grad;
  }

  std::vector<T>& grad_buffer(Var<T> v) { return grad_buffer(v.id); }

  // Gradient of the scalar loss with respect to v (zeros if none flowed).
  std::vector<T> grad(Var<T> v) const {
    const auto& n = nodes_[v.id];
    if (n.grad.empty()) return std::vector<T>(numel(n.shape), T(0));
    return n.grad;
  }

  BackwardReport backward(Var<T> loss) {
    require(loss.tape == this, Errc::kShapeMismatch, "loss belongs to another tape");
    require(nodes_[loss.id].value.size() == 1, Errc::kShapeMismatch, "loss must be a scalar");
    grad_buffer(loss.id)[0] = T(1);
    const std::string& fault = injected_fault();
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.is_leaf || !n.backward || n.grad.empty()) continue;
      if (!fault.empty() && fault == n.op) {
        for (auto& g : n.grad) g = static_cast<T>(g * T(1.5));
      }
      n.backward(*this, i);
      if (release_intermediates) {
        n.backward = nullptr;
        std::vector<T>().swap(n.grad);
        std::vector<T>().swap(n.value);
      }
    }
    BackwardReport report;
    for (const auto& n : nodes_) {
      if (n.is_leaf && n.requires_grad && n.grad.empty()) report.disconnected.push_back(n.name);
    }
    return report;
  }

 private:
  std::vector<Node<T>> nodes_;
};

// Leaves no gradient path through x.
template <class T>
Var<T> detach(Var<T> x) {
  return x.tape->constant(x.shape(), x.value());
}

}  // namespace adafe::grad
