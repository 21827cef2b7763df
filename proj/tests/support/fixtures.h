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


// Small model fixtures shared by the objective, inference and federation
// tests.

#ifndef PFL_TESTS_SUPPORT_FIXTURES_H_
#define PFL_TESTS_SUPPORT_FIXTURES_H_

#include <vector>

#include "pfl/model.h"
#include "pfl/rng.h"
#include "pfl/vit.h"

namespace pfl::testing {

// Two layers, width 8, 8x8 images in 4x4 patches (M = 4), three classes.
inline ModelSpec TinySpec(Method method = Method::kBayesPt) {
  ModelSpec spec;
  spec.vit.layers = 2;
  spec.vit.width = 8;
  spec.vit.heads = 2;
  spec.vit.mlp_hidden = 16;
  spec.vit.image_h = spec.vit.image_w = 8;
  spec.vit.num_classes = 3;
  spec.prompt.global_tokens = 2;
  spec.prompt.instance_tokens = 1;
  spec.vpt_tokens = 3;
  spec.method = method;
  return spec;
}

inline Tensor RandomImage(const ViTConfig& c, uint64_t seed) {
  Rng rng(seed);
  Tensor t({static_cast<size_t>(c.channels), static_cast<size_t>(c.image_h),
            static_cast<size_t>(c.image_w)});
  for (double& v : t.values()) v = rng.Normal();
  return t;
}

inline std::vector<Instance> RandomInstances(const Backbone& backbone, int n,
                                             uint64_t seed) {
  std::vector<Instance> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(MakeInstance(backbone, RandomImage(backbone.config(), seed * 1000 + i),
                               i % backbone.config().num_classes, 0, i));
  }
  return out;
}

// Global parameters moved off their initial values.
inline NamedTensors PerturbedParams(const ModelSpec& spec, uint64_t seed,
                                    double scale = 0.1) {
  NamedTensors p = InitGlobalParams(spec, seed);
  Rng rng(seed + 77);
  for (auto& [name, t] : p)
    for (double& v : t.values()) v += scale * rng.Normal();
  return p;
}

}  // namespace pfl::testing

#endif  // PFL_TESTS_SUPPORT_FIXTURES_H_
