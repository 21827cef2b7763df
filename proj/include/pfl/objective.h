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

#ifndef PFL_OBJECTIVE_H_
#define PFL_OBJECTIVE_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pfl/autograd.h"
#include "pfl/model.h"
#include "pfl/rng.h"
#include "pfl/sivi_prompt.h"

namespace pfl {

// Standard normal prior N(0, I) over all prompt entries.
Var PriorLogDensity(Var prompt);
double PriorLogDensity(const Tensor& prompt);

// Terms of one importance sample j.
struct ImportanceSample {
  Var log_lik;    // log p(y | p^j, x)
  Var log_prior;  // log p(p^j)
  Var log_q_own;  // log q(p^j | psi^j)
  std::vector<Var> log_q_aux;  // log q(p^j | psi~^s), s = 1..S
};

// log Omega^j = logsumexp(log_q_own, log_q_aux...) - log(S + 1).
Var LogMixtureDensity(const ImportanceSample& sample);

// log (1/J) sum_j exp(log_lik + log_prior - log Omega^j). Works for any model
// that supplies the per-sample terms.
Var SurrogateBound(std::span<const ImportanceSample> samples);

// Randomness consumed by one surrogate evaluation. Main draws (J masks and
// noise) and auxiliary draws (S masks) come from separate substreams so that
// changing S never alters the importance samples.
struct SurrogateDraws {
  std::vector<MaskSet> masks;                // J
  std::vector<std::vector<Tensor>> noise;    // J x L, each [nu x d]
  std::vector<MaskSet> aux_masks;            // S
};

SurrogateDraws DrawSurrogate(const PromptConfig& config, const ViTConfig& vit,
                             Rng& rng);

struct ElboTerms {
  Var value;
  std::vector<ImportanceSample> samples;
  std::vector<Var> log_omega;
};

// Surrogate ELBO L_S^J for one labelled instance under a Bayesian method.
// `config` should be EffectivePromptConfig(*model.spec).
ElboTerms SurrogateElbo(const BoundModel& model, const Instance& x,
                        const PromptConfig& config, const SurrogateDraws& draws);
Var SurrogateElbo(const BoundModel& model, const Instance& x,
                  const PromptConfig& config, Rng& rng);

// Per-instance quantity each method maximises: L_S^J for the semi-implicit
// variants, log p(y | mu, x) for the deterministic ablation, and the negative
// cross-entropy for the baselines.
Var InstanceObjective(const BoundModel& model, const Instance& x, Rng& rng);

struct BatchResult {
  double value = 0.0;   // mean objective
  NamedTensors grads;   // mean gradient of the trainable tensors
};

using TrainablePredicate = std::function<bool(const std::string&)>;

// Mean of InstanceObjective over the batch; instance i draws from
// Rng(sample_seeds[i]). Gradients are reported for trainable tensors only.
BatchResult BatchObjective(const Backbone& backbone, const ModelSpec& spec,
                           const NamedTensors& params,
                           const TrainablePredicate& trainable,
                           std::span<const Instance* const> batch,
                           std::span<const uint64_t> sample_seeds);

}  // namespace pfl

#endif  // PFL_OBJECTIVE_H_
