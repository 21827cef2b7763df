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

#ifndef PFL_MODEL_H_
#define PFL_MODEL_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pfl/autograd.h"
#include "pfl/checkpoint.h"
#include "pfl/params.h"
#include "pfl/sivi_prompt.h"
#include "pfl/vit.h"

namespace pfl {

// Training rules sharing the federated loop.
enum class Method {
  kHeadTune,              // global head on frozen CLS features
  kFedVpt,                // shared shallow prompts, local heads
  kFedVptDeep,            // shared deep prompts, local heads
  kBayesPt,               // semi-implicit instance prompts + global prompt
  kBayesPtGaussian,       // same with keep_prob = 1 and S = 0
  kBayesPtDeterministic,  // prompt = encoder mean, likelihood only
};

std::string MethodName(Method method);
// Accepts the names produced by MethodName; throws ConfigError otherwise.
Method ParseMethod(const std::string& name);

struct MethodTraits {
  bool prompts = false;     // has prompt.global
  bool encoder = false;     // has encoder.*
  bool local_head = false;  // head stays on the client
  DepthMode depth = DepthMode::kDeep;
};

MethodTraits TraitsOf(Method method);
bool IsBayesian(Method method);

struct ModelSpec {
  ViTConfig vit;
  PromptConfig prompt;
  Method method = Method::kBayesPt;
  // Prompt length of the FedVPT baselines.
  int vpt_tokens = 10;
};

// Prompt configuration actually used by `spec.method`: the Gaussian ablation
// forces keep_prob = 1 and S = 0, the deterministic one keep_prob = 1, S = 0,
// J = 1.
PromptConfig EffectivePromptConfig(const ModelSpec& spec);

// Parameter group of a tensor name: "prompt", "head" or "encoder".
std::string GroupOf(const std::string& name);

// Parameters that cross the wire for `spec.method`.
NamedTensors InitGlobalParams(const ModelSpec& spec, uint64_t seed);
// Parameters kept on the client (the head for local-head methods), else empty.
NamedTensors InitLocalParams(const ModelSpec& spec, uint64_t seed);

// Frozen per-instance cache from one clean pass.
struct Instance {
  FeatureStack features;
  Tensor cls;  // [1 x d]
  int label = 0;
  int domain = 0;
  size_t id = 0;
};

Instance MakeInstance(const Backbone& backbone, const Tensor& image, int label,
                      int domain, size_t id);

// A model bound into one graph. Tensors named in `trainable` become
// parameters; everything else is a constant.
struct BoundModel {
  const Backbone* backbone = nullptr;
  const ModelSpec* spec = nullptr;
  VarMap bb;
  VarMap params;

  // [K x d] global prompt block for `layer`, or an invalid Var.
  Var GlobalBlock(int layer) const;
  const Var& head_weight() const { return Lookup(params, "head.weight"); }
  const Var& head_bias() const { return Lookup(params, "head.bias"); }
};

BoundModel BindModel(Graph& g, const Backbone& backbone, const ModelSpec& spec,
                     const NamedTensors& params,
                     const std::function<bool(const std::string&)>& trainable);

// Logits [1 x C] of the method's predictor. `instance_prompts` holds one
// [nu x d] block per layer for Bayesian methods and is ignored otherwise.
Var ModelLogits(const BoundModel& model, const Instance& x,
                std::span<const Var> instance_prompts);

}  // namespace pfl

#endif  // PFL_MODEL_H_
