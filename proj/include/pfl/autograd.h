// Copyright 2026 The pfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PFL_AUTOGRAD_H_
#define PFL_AUTOGRAD_H_

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "pfl/tensor.h"

namespace pfl {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Tape of recorded tensor operations. Nodes are appended in evaluation order,
// so walking ids downwards from the root is a reverse topological order and
// every node is visited once.
//
// Stochastic draws never enter the tape as random nodes: callers sample them
// up front and feed them in as constants.
class Graph {
 public:
  // Receives the gradient of the node's output; accumulates into inputs.
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var Constant(Tensor value);
  // Non-owning constant. `value` must outlive the graph.
  Var ConstantRef(const Tensor& value);
  // Trainable leaf.
  Var Parameter(Tensor value);

  // Appends an op node. The node requires grad iff any input does; otherwise
  // `backward` is discarded. Throws NumericError on non-finite output.
  Var Record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var Record(Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward) {
    return Record(std::move(value), std::span<const Var>(inputs.begin(),
                                                         inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  // Zero-initialised on first access. Only call for nodes requiring grad.
  Tensor& grad_buffer(Var v);
  // Accumulated gradient, or zeros if nothing flowed into `v`.
  Tensor grad(Var v) const;

  // Seeds d(root)/d(root) = 1 and propagates. `root` must hold one element.
  void Backward(Var root);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;

    const Tensor& value() const { return ref ? *ref : owned; }
  };

  Var Push(Node node);

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

}  // namespace pfl

#endif  // PFL_AUTOGRAD_H_
