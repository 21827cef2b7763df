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

#ifndef PFL_SIVI_PROMPT_H_
#define PFL_SIVI_PROMPT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "pfl/autograd.h"
#include "pfl/checkpoint.h"
#include "pfl/params.h"
#include "pfl/rng.h"
#include "pfl/vit.h"

namespace pfl {

struct PromptConfig {
  int instance_tokens = 1;  // nu, per layer
  int global_tokens = 9;    // per layer
  double keep_prob = 0.9;   // Bernoulli pi of the feature masks
  // Layers (0-based) receiving global / instance prompts. Empty means all.
  std::vector<int> global_layers;
  std::vector<int> instance_layers;
  int aux_samples = 1;   // S
  int iw_samples = 1;    // J
  int eval_samples = 5;  // V
  // Hidden width of the token-axis MLPs; 0 means M + 1.
  int encoder_hidden = 0;
  // Initial posterior standard deviation produced by the encoder.
  double init_sigma = 0.1;

  void Validate(int layers) const;
  bool GlobalAt(int layer) const;
  bool InstanceAt(int layer) const;
};

// One binary vector of length M+1 per layer; entry 0 (CLS) is always 1.
struct MaskSet {
  std::vector<std::vector<uint8_t>> masks;

  bool AllOnes() const;
};

MaskSet SampleMasks(const PromptConfig& config, int layers, int token_count,
                    Rng& rng);

// Row-wise zeroing: row j of layer i is multiplied by masks[i][j].
FeatureStack ApplyMasks(const FeatureStack& features, const MaskSet& masks);

// Encoder parameters phi, one module G_i per layer:
//   encoder.<i>.ln.{gain,bias} [d]
//   encoder.<i>.{mu,sigma}.fc1.weight [(M+1) x H], .fc1.bias [H]
//   encoder.<i>.{mu,sigma}.fc2.weight [H x nu],    .fc2.bias [nu]
NamedTensors InitEncoder(const ViTConfig& vit, const PromptConfig& config,
                         uint64_t seed);

// Per-layer posterior parameters, each [nu x d].
struct PosteriorVars {
  std::vector<Var> mean;
  std::vector<Var> stddev;
};

// mu_i = MLP_mu(LN(f_i)^T)^T, Sigma_i = exp(0.5 * MLP_sigma(LN(f_i)^T)^T).
// LN normalises each token over d; the MLPs act along the token axis.
PosteriorVars EncodePsi(const VarMap& encoder, std::span<const Var> masked,
                        const ViTConfig& vit, const PromptConfig& config);

// Stacked posterior, mean and stddev each [L x nu x d].
struct PromptPosterior {
  Tensor mean;
  Tensor stddev;
};

PromptPosterior EncodePsi(const NamedTensors& encoder, const FeatureStack& masked,
                          const ViTConfig& vit, const PromptConfig& config);

// Reparameterised draw p = mu + Sigma * eps. The noise is a graph constant.
struct PromptDraw {
  std::vector<Var> prompt;   // per layer [nu x d]
  std::vector<Tensor> noise;  // per layer [nu x d]
};

PromptDraw SamplePrompt(const PosteriorVars& psi, Rng& rng);
PromptDraw SamplePrompt(const PosteriorVars& psi, std::vector<Tensor> noise);

struct PromptSample {
  Tensor prompt;  // [L x nu x d]
  Tensor noise;   // [L x nu x d]
};

PromptSample SamplePrompt(const PromptPosterior& psi, Rng& rng);

// Per layer, global tokens first: [L x Kg x d] + [L x nu x d] -> [L x (Kg+nu) x d].
Tensor ConcatGlobal(const Tensor& global_prompt, const Tensor& instance_prompt);

}  // namespace pfl

#endif  // PFL_SIVI_PROMPT_H_
