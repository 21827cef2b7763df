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

#include "pfl/objective.h"

#include <algorithm>
#include <cmath>

#include "pfl/errors.h"
#include "pfl/ops.h"

namespace pfl {
namespace {

std::vector<Var> MaskedFeatures(Graph& g, const Instance& x, const MaskSet& m) {
  std::vector<Var> out;
  for (size_t i = 0; i < x.features.layers.size(); ++i) {
    Var f = g.ConstantRef(x.features.layers[i]);
    if (std::all_of(m.masks[i].begin(), m.masks[i].end(),
                    [](uint8_t v) { return v == 1; })) {
      out.push_back(f);
      continue;
    }
    std::vector<double> scale(m.masks[i].begin(), m.masks[i].end());
    out.push_back(ScaleRows(f, scale));
  }
  return out;
}

Var SumVars(std::span<const Var> vars) {
  Var acc = vars[0];
  for (size_t i = 1; i < vars.size(); ++i) acc = Add(acc, vars[i]);
  return acc;
}

Var LayerwiseDensity(const std::vector<Var>& p, const PosteriorVars& psi) {
  std::vector<Var> terms;
  for (size_t i = 0; i < p.size(); ++i) {
    terms.push_back(GaussianLogDensity(p[i], psi.mean[i], psi.stddev[i]));
  }
  return SumVars(terms);
}

Var LayerwisePrior(const std::vector<Var>& p) {
  std::vector<Var> terms;
  for (const Var& v : p) terms.push_back(PriorLogDensity(v));
  return SumVars(terms);
}

}  // namespace

Var PriorLogDensity(Var prompt) { return StdNormalLogDensity(prompt); }

double PriorLogDensity(const Tensor& prompt) {
  Graph g;
  return StdNormalLogDensity(g.ConstantRef(prompt)).item();
}

Var LogMixtureDensity(const ImportanceSample& sample) {
  std::vector<Var> comps;
  comps.reserve(sample.log_q_aux.size() + 1);
  comps.push_back(sample.log_q_own);
  comps.insert(comps.end(), sample.log_q_aux.begin(), sample.log_q_aux.end());
  if (comps.size() == 1) return comps[0];
  return AddScalar(LogSumExp(comps), -std::log(static_cast<double>(comps.size())));
}

Var SurrogateBound(std::span<const ImportanceSample> samples) {
  if (samples.empty()) throw ArgumentError("SurrogateBound needs J >= 1");
  std::vector<Var> terms;
  for (const ImportanceSample& s : samples) {
    terms.push_back(Sub(Add(s.log_lik, s.log_prior), LogMixtureDensity(s)));
  }
  if (terms.size() == 1) return terms[0];
  return AddScalar(LogSumExp(terms), -std::log(static_cast<double>(terms.size())));
}

SurrogateDraws DrawSurrogate(const PromptConfig& config, const ViTConfig& vit,
                             Rng& rng) {
  Rng main(rng.NextU64());
  Rng aux(rng.NextU64());
  SurrogateDraws d;
  const size_t nu = config.instance_tokens, width = vit.width;
  for (int j = 0; j < config.iw_samples; ++j) {
    d.masks.push_back(SampleMasks(config, vit.layers, vit.token_count(), main));
    std::vector<Tensor> eps;
    for (int i = 0; i < vit.layers; ++i) {
      Tensor e({nu, width});
      for (double& v : e.values()) v = main.Normal();
      eps.push_back(std::move(e));
    }
    d.noise.push_back(std::move(eps));
  }
  for (int s = 0; s < config.aux_samples; ++s) {
    d.aux_masks.push_back(SampleMasks(config, vit.layers, vit.token_count(), aux));
  }
  return d;
}

ElboTerms SurrogateElbo(const BoundModel& model, const Instance& x,
                        const PromptConfig& config, const SurrogateDraws& draws) {
  const ViTConfig& vit = model.spec->vit;
  Graph& g = model.head_weight().graph();
  std::vector<PosteriorVars> aux;
  for (const MaskSet& m : draws.aux_masks) {
    aux.push_back(EncodePsi(model.params, MaskedFeatures(g, x, m), vit, config));
  }
  ElboTerms out;
  for (size_t j = 0; j < draws.masks.size(); ++j) {
    PosteriorVars psi =
        EncodePsi(model.params, MaskedFeatures(g, x, draws.masks[j]), vit, config);
    PromptDraw p = SamplePrompt(psi, draws.noise[j]);
    ImportanceSample s;
    s.log_lik = Scale(SoftmaxCrossEntropy(ModelLogits(model, x, p.prompt), x.label),
                      -1.0);
    s.log_prior = LayerwisePrior(p.prompt);
    s.log_q_own = LayerwiseDensity(p.prompt, psi);
    for (const PosteriorVars& a : aux) {
      s.log_q_aux.push_back(LayerwiseDensity(p.prompt, a));
    }
    out.log_omega.push_back(LogMixtureDensity(s));
    out.samples.push_back(std::move(s));
  }
  out.value = SurrogateBound(out.samples);
  return out;
}

Var SurrogateElbo(const BoundModel& model, const Instance& x,
                  const PromptConfig& config, Rng& rng) {
  SurrogateDraws draws = DrawSurrogate(config, model.spec->vit, rng);
  return SurrogateElbo(model, x, config, draws).value;
}

Var InstanceObjective(const BoundModel& model, const Instance& x, Rng& rng) {
  const ModelSpec& spec = *model.spec;
  switch (spec.method) {
    case Method::kHeadTune:
    case Method::kFedVpt:
    case Method::kFedVptDeep:
      return Scale(SoftmaxCrossEntropy(ModelLogits(model, x, {}), x.label), -1.0);
    case Method::kBayesPtDeterministic: {
      const PromptConfig config = EffectivePromptConfig(spec);
      Graph& g = model.head_weight().graph();
      std::vector<Var> f;
      for (const Tensor& t : x.features.layers) f.push_back(g.ConstantRef(t));
      PosteriorVars psi = EncodePsi(model.params, f, spec.vit, config);
      return Scale(SoftmaxCrossEntropy(ModelLogits(model, x, psi.mean), x.label),
                   -1.0);
    }
    case Method::kBayesPt:
    case Method::kBayesPtGaussian:
      return SurrogateElbo(model, x, EffectivePromptConfig(spec), rng);
  }
  throw ConfigError("method: unhandled");
}

BatchResult BatchObjective(const Backbone& backbone, const ModelSpec& spec,
                           const NamedTensors& params,
                           const TrainablePredicate& trainable,
                           std::span<const Instance* const> batch,
                           std::span<const uint64_t> sample_seeds) {
  if (batch.empty()) throw ArgumentError("BatchObjective: empty batch");
  if (sample_seeds.size() != batch.size()) {
    throw DimensionError("BatchObjective: one seed per sample required");
  }
  BatchResult out;
  for (const auto& [name, t] : params) {
    if (trainable && trainable(name)) out.grads.emplace(name, Tensor(t.shape(), 0.0));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    Graph g;
    BoundModel m = BindModel(g, backbone, spec, params, trainable);
    Rng rng(sample_seeds[i]);
    Var obj = InstanceObjective(m, *batch[i], rng);
    out.value += obj.item();
    g.Backward(obj);
    for (auto& [name, grad] : out.grads) {
      const Tensor gi = g.grad(Lookup(m.params, name));
      for (size_t k = 0; k < grad.size(); ++k) grad[k] += gi[k];
    }
  }
  out.value *= inv;
  for (auto& [name, grad] : out.grads) {
    for (double& v : grad.values()) v *= inv;
  }
  return out;
}

}  // namespace pfl
