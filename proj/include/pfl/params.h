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

#ifndef PFL_PARAMS_H_
#define PFL_PARAMS_H_

#include <map>
#include <string>

#include "pfl/autograd.h"
#include "pfl/checkpoint.h"

namespace pfl {

using VarMap = std::map<std::string, Var>;

// Trainable leaves holding copies of `tensors`.
VarMap BindParameters(Graph& g, const NamedTensors& tensors);
// Non-owning constant leaves; `tensors` must outlive the graph.
VarMap BindConstants(Graph& g, const NamedTensors& tensors);

const Var& Lookup(const VarMap& vars, const std::string& name);
const Tensor& Lookup(const NamedTensors& tensors, const std::string& name);

NamedTensors CollectGrads(const Graph& g, const VarMap& vars);

// dst[name] += scale * src[name] for every name in src; names must exist in dst.
void AddScaled(NamedTensors& dst, const NamedTensors& src, double scale);

// Same names and shapes.
bool SameStructure(const NamedTensors& a, const NamedTensors& b);

NamedTensors ZerosLike(const NamedTensors& tensors);

}  // namespace pfl

#endif  // PFL_PARAMS_H_
