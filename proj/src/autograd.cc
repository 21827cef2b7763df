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

#include "pfl/autograd.h"

#include "pfl/errors.h"

namespace pfl {

Var Graph::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::Constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return Push(std::move(n));
}

Var Graph::ConstantRef(const Tensor& value) {
  Node n;
  n.ref = &value;
  return Push(std::move(n));
}

Var Graph::Parameter(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return Push(std::move(n));
}

Var Graph::Record(Tensor value, std::span<const Var> inputs,
                  BackwardFn backward) {
  if (!value.AllFinite()) {
    throw NumericError("non-finite value produced by op of shape " +
                       ShapeString(value.shape()));
  }
  Node n;
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph_ != this) throw ContractError("Var from a different graph");
    if (nodes_[in.id_].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Push(std::move(n));
}

const Tensor& Graph::value(Var v) const { return nodes_[v.id_].value(); }

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.has_grad) {
    n.grad = Tensor(n.value().shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.has_grad ? n.grad : Tensor(n.value().shape(), 0.0);
}

void Graph::Backward(Var root) {
  if (root.graph_ != this) throw ContractError("root from a different graph");
  if (value(root).size() != 1) {
    throw DimensionError("Backward needs a scalar root, got " +
                         ShapeString(value(root).shape()));
  }
  if (!nodes_[root.id_].requires_grad) return;
  grad_buffer(root)[0] += 1.0;
  for (int id = root.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

}  // namespace pfl
