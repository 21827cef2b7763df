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

#ifndef PFL_INFERENCE_H_
#define PFL_INFERENCE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "pfl/model.h"
#include "pfl/rng.h"

namespace pfl {

struct PredictionResult {
  std::vector<std::vector<double>> per_sample;  // V class distributions
  std::vector<double> averaged;
  int predicted = 0;  // argmax of `averaged`, lowest index on ties
};

// Lowest index among the maxima.
int ArgMax(std::span<const double> values);

// V-sample prediction. Bayesian methods draw V mask sets, encode V posteriors
// and use each posterior mean as the prompt; the class distributions are
// averaged. Mask set v comes from a substream keyed by one draw from `rng`
// and v, so predictions at V and V' > V share their first V masks.
// Non-Bayesian and mask-free configurations are evaluated once and replicated.
PredictionResult Predict(const Backbone& backbone, const ModelSpec& spec,
                         const NamedTensors& params, const Instance& x, int V,
                         Rng& rng);

// A client as seen by evaluation: its test instances and the parameters it
// predicts with (synchronised global payload plus any local head).
struct EvalClient {
  std::span<const Instance> test;
  const NamedTensors* params = nullptr;
};

struct EvalResult {
  double average = 0.0;       // unweighted mean of client accuracies
  double worst_local = 0.0;   // minimum client accuracy
  std::vector<double> per_client;
};

// Instance i of client k draws from the substream (seed, k, i).
EvalResult Evaluate(const Backbone& backbone, const ModelSpec& spec,
                    std::span<const EvalClient> clients, int V, uint64_t seed);

// Average / worst-local summary of given accuracies.
EvalResult Summarize(std::vector<double> per_client);

}  // namespace pfl

#endif  // PFL_INFERENCE_H_
