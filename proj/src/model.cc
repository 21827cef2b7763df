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

#include "pfl/model.h"

#include <cmath>

#include "pfl/errors.h"
#include "pfl/ops.h"
#include "pfl/rng.h"

namespace pfl {

std::string MethodName(Method method) {
  switch (method) {
    case Method::kHeadTune: return "head-tune";
    case Method::kFedVpt: return "fedvpt";
    case Method::kFedVptDeep: return "fedvpt-d";
    case Method::kBayesPt: return "pfedbayespt";
    case Method::kBayesPtGaussian: return "pfedbayespt-g";
    case Method::kBayesPtDeterministic: return "pfedbayespt-d";
  }
  return "unknown";
}

Method ParseMethod(const std::string& name) {
  for (Method m : {Method::kHeadTune, Method::kFedVpt, Method::kFedVptDeep,
                   Method::kBayesPt, Method::kBayesPtGaussian,
                   Method::kBayesPtDeterministic}) {
    if (MethodName(m) == name) return m;
  }
  throw ConfigError("method: unknown name '" + name + "'");
}

MethodTraits TraitsOf(Method method) {
  MethodTraits t;
  switch (method) {
    case Method::kHeadTune:
      break;
    case Method::kFedVpt:
      t.prompts = true;
      t.local_head = true;
      t.depth = DepthMode::kShallow;
      break;
    case Method::kFedVptDeep:
      t.prompts = true;
      t.local_head = true;
      break;
    case Method::kBayesPt:
    case Method::kBayesPtGaussian:
    case Method::kBayesPtDeterministic:
      t.prompts = true;
      t.encoder = true;
      break;
  }
  return t;
}

bool IsBayesian(Method method) { return TraitsOf(method).encoder; }

PromptConfig EffectivePromptConfig(const ModelSpec& spec) {
  PromptConfig c = spec.prompt;
  if (spec.method == Method::kBayesPtGaussian) {
    c.keep_prob = 1.0;
    c.aux_samples = 0;
  } else if (spec.method == Method::kBayesPtDeterministic) {
    c.keep_prob = 1.0;
    c.aux_samples = 0;
    c.iw_samples = 1;
  }
  return c;
}

std::string GroupOf(const std::string& name) {
  return name.substr(0, name.find('.'));
}

NamedTensors InitGlobalParams(const ModelSpec& spec, uint64_t seed) {
  const MethodTraits t = TraitsOf(spec.method);
  const ViTConfig& vit = spec.vit;
  NamedTensors p;
  if (t.prompts) {
    const size_t layers = t.depth == DepthMode::kShallow ? 1 : vit.layers;
    const size_t tokens = t.encoder ? spec.prompt.global_tokens : spec.vpt_tokens;
    Tensor prompt({layers, tokens, static_cast<size_t>(vit.width)});
    Rng rng = Rng::Derive(seed, StreamTag::kInit, {0x9b});
    // Uniform(-a, a) with a = sqrt(6 / (d + d)) as in the VPT reference code.
    const double a = std::sqrt(3.0 / vit.width);
    for (double& v : prompt.values()) v = a * (2.0 * rng.Uniform() - 1.0);
    p["prompt.global"] = std::move(prompt);
  }
  if (!t.local_head) p.merge(InitHead(vit, seed));
  if (t.encoder) p.merge(InitEncoder(vit, spec.prompt, seed));
  return p;
}

NamedTensors InitLocalParams(const ModelSpec& spec, uint64_t seed) {
  if (!TraitsOf(spec.method).local_head) return {};
  return InitHead(spec.vit, seed);
}

Instance MakeInstance(const Backbone& backbone, const Tensor& image, int label,
                      int domain, size_t id) {
  CleanPass pass = CleanForward(backbone, image);
  Instance x;
  x.features = std::move(pass.features);
  x.cls = std::move(pass.cls);
  x.label = label;
  x.domain = domain;
  x.id = id;
  return x;
}

Var BoundModel::GlobalBlock(int layer) const {
  auto it = params.find("prompt.global");
  if (it == params.end()) return Var();
  const Var& all = it->second;
  const size_t layers = all.shape()[0], k = all.shape()[1], d = all.shape()[2];
  if (static_cast<size_t>(layer) >= layers) return Var();
  Var flat = Reshape(all, {layers * k, d});
  return RowSlice(flat, layer * k, (layer + 1) * k);
}

BoundModel BindModel(Graph& g, const Backbone& backbone, const ModelSpec& spec,
                     const NamedTensors& params,
                     const std::function<bool(const std::string&)>& trainable) {
  BoundModel m;
  m.backbone = &backbone;
  m.spec = &spec;
  m.bb = backbone.BindFrozen(g);
  for (const auto& [name, t] : params) {
    m.params.emplace(name, trainable && trainable(name) ? g.Parameter(t)
                                                        : g.ConstantRef(t));
  }
  return m;
}

Var ModelLogits(const BoundModel& model, const Instance& x,
                std::span<const Var> instance_prompts) {
  const ModelSpec& spec = *model.spec;
  const MethodTraits t = TraitsOf(spec.method);
  Graph& g = model.head_weight().graph();
  if (!t.prompts) {
    return Linear(g.ConstantRef(x.cls), model.head_weight(), model.head_bias());
  }
  const ViTConfig& vit = spec.vit;
  std::vector<Var> slots(vit.layers);
  if (!t.encoder) {
    if (t.depth == DepthMode::kShallow) {
      slots[0] = model.GlobalBlock(0);
    } else {
      for (int i = 0; i < vit.layers; ++i) slots[i] = model.GlobalBlock(i);
    }
  } else {
    if (instance_prompts.size() != static_cast<size_t>(vit.layers)) {
      throw DimensionError("ModelLogits: expected one instance prompt per layer");
    }
    for (int i = 0; i < vit.layers; ++i) {
      std::vector<Var> parts;
      if (spec.prompt.GlobalAt(i)) parts.push_back(model.GlobalBlock(i));
      if (spec.prompt.InstanceAt(i)) parts.push_back(instance_prompts[i]);
      if (parts.size() == 1) {
        slots[i] = parts[0];
      } else if (parts.size() == 2) {
        slots[i] = ConcatRows(parts);
      }
    }
  }
  Var f1 = g.ConstantRef(x.features.layers[0]);
  return PromptedForward(model.bb, vit, f1, slots, model.head_weight(),
                         model.head_bias());
}

}  // namespace pfl
