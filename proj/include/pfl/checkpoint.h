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

#ifndef PFL_CHECKPOINT_H_
#define PFL_CHECKPOINT_H_

#include <cstdint>
#include <map>
#include <string>

#include "pfl/tensor.h"

namespace pfl {

// Ordered name -> tensor map. Ordering by name makes serialisation and
// aggregation deterministic.
using NamedTensors = std::map<std::string, Tensor>;

// Flat archive of named float64 tensors; layout documented in
// docs/checkpoint_format.md.
std::string SerializeTensors(const NamedTensors& tensors);
NamedTensors DeserializeTensors(const std::string& bytes);

void SaveTensors(const std::string& path, const NamedTensors& tensors);
NamedTensors LoadTensors(const std::string& path);

// 64-bit FNV-1a over the serialised archive.
uint64_t HashTensors(const NamedTensors& tensors);

// Tensors whose names start with `prefix`.
NamedTensors SelectPrefix(const NamedTensors& tensors, const std::string& prefix);

}  // namespace pfl

#endif  // PFL_CHECKPOINT_H_
