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

#include "pfl/inference.h"

#include <algorithm>

#include "pfl/errors.h"
#include "pfl/ops.h"

namespace pfl {
namespace {

std::vector<double> Distribution(const BoundModel& m, const Instance& x,
                                 std::span<const Var> prompts) {
  return Softmax(ModelLogits(m, x, prompts).value().values());
}

}  // namespace

int ArgMax(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("ArgMax of an empty list");
  int best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

PredictionResult Predict(const Backbone& backbone, const ModelSpec& spec,
                         const NamedTensors& params, const Instance& x, int V,
                         Rng& rng) {
  if (V < 1) throw ConfigError("V: must be >= 1");
  const uint64_t key = rng.NextU64();
  const PromptConfig config = EffectivePromptConfig(spec);
  const ViTConfig& vit = spec.vit;
  Graph g;
  BoundModel m = BindModel(g, backbone, spec, params, nullptr);
  PredictionResult out;

  const bool stochastic = IsBayesian(spec.method) && config.keep_prob < 1.0;
  if (!stochastic) {
    std::vector<double> dist;
    if (IsBayesian(spec.method)) {
      std::vector<Var> f;
      for (const Tensor& t : x.features.layers) f.push_back(g.ConstantRef(t));
      PosteriorVars psi = EncodePsi(m.params, f, vit, config);
      dist = Distribution(m, x, psi.mean);
    } else {
      dist = Distribution(m, x, {});
    }
    out.per_sample.assign(V, dist);
    out.averaged = dist;
    out.predicted = ArgMax(out.averaged);
    return out;
  }

  out.averaged.assign(vit.num_classes, 0.0);
  for (int v = 0; v < V; ++v) {
    Rng mask_rng = Rng::Derive(key, StreamTag::kEval, {static_cast<uint64_t>(v)});
    MaskSet masks = SampleMasks(config, vit.layers, vit.token_count(), mask_rng);
    FeatureStack masked = ApplyMasks(x.features, masks);
    std::vector<Var> f;
    for (const Tensor& t : masked.layers) f.push_back(g.Constant(t));
    PosteriorVars psi = EncodePsi(m.params, f, vit, config);
    out.per_sample.push_back(Distribution(m, x, psi.mean));
    for (int c = 0; c < vit.num_classes; ++c) out.averaged[c] += out.per_sample.back()[c];
  }
  for (double& p : out.averaged) p /= static_cast<double>(V);
  out.predicted = ArgMax(out.averaged);
  return out;
}

EvalResult Summarize(std::vector<double> per_client) {
  if (per_client.empty()) throw ArgumentError("Summarize: no clients");
  EvalResult r;
  double sum = 0.0;
  for (double a : per_client) sum += a;
  r.average = sum / static_cast<double>(per_client.size());
  r.worst_local = *std::min_element(per_client.begin(), per_client.end());
  r.per_client = std::move(per_client);
  return r;
}

EvalResult Evaluate(const Backbone& backbone, const ModelSpec& spec,
                    std::span<const EvalClient> clients, int V, uint64_t seed) {
  std::vector<double> acc;
  for (size_t k = 0; k < clients.size(); ++k) {
    const EvalClient& c = clients[k];
    if (c.test.empty()) {
      throw ConfigError("test split of client " + std::to_string(k) + " is empty");
    }
    size_t correct = 0;
    for (size_t i = 0; i < c.test.size(); ++i) {
      Rng rng = Rng::Derive(seed, StreamTag::kEval, {k, i});
      if (Predict(backbone, spec, *c.params, c.test[i], V, rng).predicted ==
          c.test[i].label) {
        ++correct;
      }
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(c.test.size()));
  }
  return Summarize(std::move(acc));
}

}  // namespace pfl
