// Copyright 2026 The mmslr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors with a reverse-mode tape.
//
// Every operation creates a node holding its value and, when any input
// requires a gradient, a closure that pushes the node's adjoint back into
// its inputs. backward() linearizes the reachable graph into a
// ComputationTape (topological order) and replays the closures in reverse.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mmslr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when operand shapes do not conform; the message names the op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised for values outside an operation's domain (log of <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until an adjoint arrives
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false) {
    if (rows.empty() || rows.front().empty()) throw ShapeError("matrix: empty rows");
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw ShapeError("matrix: ragged rows");
      v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), rows.front().size()}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  /// Mutable access for leaves (optimizers, finite differences).
  std::vector<double>& mutable_values() { return node_->value; }
  double item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
  }
  double at(std::size_t i, std::size_t j) const { return node_->value[i * node_->shape[1] + j]; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros if nothing has flowed in yet.
  std::vector<double> grad() const {
    return node_->grad.empty() ? std::vector<double>(numel(), 0.0) : node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Builds a non-leaf tensor. `backward` receives the output node and must
  /// accumulate into inputs whose requires_grad is set.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
    Tensor out;
    out.node_ = std::make_shared<detail::Node>();
    out.node_->shape = std::move(shape);
    out.node_->value = std::move(values);
    out.node_->op = op;
    bool rg = false;
    for (const auto& t : inputs) rg = rg || t.requires_grad();
    if (rg) {
      out.node_->requires_grad = true;
      out.node_->inputs.reserve(inputs.size());
      for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
      out.node_->backward = std::move(backward);
    }
    return out;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reachable nodes of a graph in topological order (inputs before outputs).
struct ComputationTape {
  std::vector<detail::Node*> order;

  static ComputationTape record(const Tensor& root) {
    ComputationTape tape;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        detail::Node* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        tape.order.push_back(n);
        stack.pop_back();
      }
    }
    return tape;
  }

  /// Replays adjoint rules from the last recorded node back to the first.
  void replay() const {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }
};

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
/// tensor that requires them. The root must be a scalar.
inline void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward: root " + shape_str(root.shape()) + " is not a scalar");
  }
  if (!root.requires_grad()) return;
  root.node()->ensure_grad()[0] += 1.0;
  ComputationTape::record(root).replay();
}

}  // namespace mmslr
