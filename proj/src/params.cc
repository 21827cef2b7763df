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

#include "pfl/params.h"

#include "pfl/errors.h"

namespace pfl {

VarMap BindParameters(Graph& g, const NamedTensors& tensors) {
  VarMap out;
  for (const auto& [name, t] : tensors) out.emplace(name, g.Parameter(t));
  return out;
}

VarMap BindConstants(Graph& g, const NamedTensors& tensors) {
  VarMap out;
  for (const auto& [name, t] : tensors) out.emplace(name, g.ConstantRef(t));
  return out;
}

const Var& Lookup(const VarMap& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw ArgumentError("missing parameter '" + name + "'");
  return it->second;
}

const Tensor& Lookup(const NamedTensors& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ArgumentError("missing tensor '" + name + "'");
  return it->second;
}

NamedTensors CollectGrads(const Graph& g, const VarMap& vars) {
  NamedTensors out;
  for (const auto& [name, v] : vars) out.emplace(name, g.grad(v));
  return out;
}

void AddScaled(NamedTensors& dst, const NamedTensors& src, double scale) {
  for (const auto& [name, s] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) throw ProtocolError("AddScaled: unknown tensor '" + name + "'");
    Tensor& d = it->second;
    if (d.shape() != s.shape()) {
      throw DimensionError("AddScaled: '" + name + "' has shape " +
                           ShapeString(d.shape()) + " vs " +
                           ShapeString(s.shape()));
    }
    for (size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  }
}

bool SameStructure(const NamedTensors& a, const NamedTensors& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) {
      return false;
    }
  }
  return true;
}

NamedTensors ZerosLike(const NamedTensors& tensors) {
  NamedTensors out;
  for (const auto& [name, t] : tensors) out.emplace(name, Tensor(t.shape(), 0.0));
  return out;
}

}  // namespace pfl
