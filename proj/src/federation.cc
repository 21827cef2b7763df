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


#include "pfl/federation.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "pfl/errors.h"
#include "pfl/objective.h"
#include "pfl/parallel.h"
#include "pfl/params.h"
#include "pfl/rng.h"

namespace pfl {
namespace {

constexpr uint64_t kLocalHeadKey = 0x10ca1;

bool AllTrainable(const std::string&) { return true; }

double RateFor(const std::string& name, const Hyperparams& hyper) {
  return GroupOf(name) == "encoder" ? hyper.encoder_lr : hyper.lr;
}

// Splits `merged` back into the tensors named in `global` and `local`.
ClientUpdate Split(const NamedTensors& merged, const ClientState& client) {
  ClientUpdate u;
  for (const auto& [name, t] : merged) {
    if (client.local.count(name)) {
      u.local.emplace(name, t);
    } else {
      u.global.emplace(name, t);
    }
  }
  return u;
}

}  // namespace

void Hyperparams::Validate() const {
  auto need = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string(field) + ": " + why);
  };
  need(rounds >= 0, "rounds", "must be >= 0");
  need(local_epochs >= 1, "local_epochs", "must be >= 1");
  need(batch_size >= 1, "batch_size", "must be >= 1");
  need(lr >= 0.0 && std::isfinite(lr), "lr", "must be finite and >= 0");
  need(encoder_lr >= 0.0 && std::isfinite(encoder_lr), "encoder_lr",
       "must be finite and >= 0");
  need(participation > 0.0 && participation <= 1.0, "participation",
       "must lie in (0, 1]");
  need(eval_every >= 0, "eval_every", "must be >= 0");
}

NamedTensors ClientState::Params() const {
  NamedTensors p = global;
  for (const auto& [name, t] : local) p[name] = t;
  return p;
}

std::vector<Instance> MakeInstances(const Backbone& backbone, const Dataset& data,
                                    int workers) {
  std::vector<Instance> out(data.samples.size());
  ParallelFor(out.size(), workers, [&](size_t i) {
    const Sample& s = data.samples[i];
    out[i] = MakeInstance(backbone, s.image, s.label, s.domain, s.id);
  });
  return out;
}

std::vector<ClientState> MakeClients(const ModelSpec& spec,
                                     std::span<const Instance> pool,
                                     const Partition& partition,
                                     const NamedTensors& global, uint64_t seed) {
  std::vector<ClientState> clients;
  for (size_t k = 0; k < partition.clients.size(); ++k) {
    ClientState c;
    c.id = static_cast<int>(k);
    for (size_t i : partition.clients[k].train) c.train.push_back(pool[i]);
    for (size_t i : partition.clients[k].test) c.test.push_back(pool[i]);
    c.global = global;
    c.local = InitLocalParams(spec, MixKey(MixKey(seed, kLocalHeadKey), k));
    clients.push_back(std::move(c));
  }
  return clients;
}

std::vector<int> SelectClients(int n, double fraction, uint64_t seed, int round) {
  if (n < 1 || !(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("participation: need n >= 1 and fraction in (0, 1]");
  }
  const long count = std::lround(fraction * n);
  if (count < 1) {
    throw ConfigError("participation: fraction * clients rounds to an empty selection");
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (count < n) {
    Rng rng = Rng::Derive(seed, StreamTag::kSelect, {static_cast<uint64_t>(round)});
    // Partial Fisher-Yates.
    for (long i = 0; i < count; ++i) {
      const size_t j = i + rng.Below(n - i);
      std::swap(ids[i], ids[j]);
    }
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

std::vector<std::pair<size_t, size_t>> MiniBatches(size_t n, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  std::vector<std::pair<size_t, size_t>> out;
  const size_t b = static_cast<size_t>(batch_size);
  for (size_t start = 0; start < n; start += b) out.emplace_back(start, std::min(n, start + b));
  return out;
}

ClientUpdate LocalUpdate(const Backbone& backbone, const ModelSpec& spec,
                         const ClientState& client, const Hyperparams& hyper,
                         uint64_t seed, int round,
                         const TrainablePredicate& trainable) {
  if (client.train.empty()) {
    throw ConfigError("client " + std::to_string(client.id) + ": empty train shard");
  }
  const TrainablePredicate& which = trainable ? trainable : TrainablePredicate(AllTrainable);
  NamedTensors params = client.Params();
  const size_t n = client.train.size();
  const auto batches = MiniBatches(n, hyper.batch_size);
  std::vector<size_t> order(n);
  for (int epoch = 0; epoch < hyper.local_epochs; ++epoch) {
    const std::initializer_list<uint64_t> key = {
        static_cast<uint64_t>(round), static_cast<uint64_t>(client.id),
        static_cast<uint64_t>(epoch)};
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng::Derive(seed, StreamTag::kShuffle, key);
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    Rng sampler = Rng::Derive(seed, StreamTag::kSample, key);
    for (const auto& [start, end] : batches) {
      std::vector<const Instance*> members;
      std::vector<uint64_t> seeds;
      for (size_t i = start; i < end; ++i) {
        members.push_back(&client.train[order[i]]);
        seeds.push_back(sampler.NextU64());
      }
      BatchResult r = BatchObjective(backbone, spec, params, which, members, seeds);
      for (const auto& [name, grad] : r.grads) {
        const double rate = RateFor(name, hyper);
        if (rate == 0.0) continue;
        Tensor& p = params.at(name);
        for (size_t k = 0; k < p.size(); ++k) p[k] += rate * grad[k];
      }
    }
  }
  ClientUpdate u = Split(params, client);
  u.num_samples = n;
  return u;
}

NamedTensors Aggregate(std::span<const NamedTensors> payloads,
                       std::span<const double> weights) {
  if (payloads.empty()) throw ProtocolError("Aggregate: no updates");
  if (weights.size() != payloads.size()) {
    throw ProtocolError("Aggregate: one weight per update required");
  }
  for (size_t k = 1; k < payloads.size(); ++k) {
    if (!SameStructure(payloads[0], payloads[k])) {
      throw ProtocolError("Aggregate: update " + std::to_string(k) +
                          " differs in structure from update 0");
    }
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ProtocolError("Aggregate: weights must sum to > 0");
  NamedTensors out = ZerosLike(payloads[0]);
  for (size_t k = 0; k < payloads.size(); ++k) {
    AddScaled(out, payloads[k], weights[k] / total);
  }
  return out;
}

NamedTensors Aggregate(std::span<const ClientUpdate> updates, Weighting weighting) {
  std::vector<NamedTensors> payloads;
  std::vector<double> weights;
  for (const ClientUpdate& u : updates) {
    payloads.push_back(u.global);
    weights.push_back(weighting == Weighting::kDataSize
                          ? static_cast<double>(u.num_samples)
                          : 1.0);
  }
  return Aggregate(payloads, weights);
}

EvalResult EvaluateClients(const Backbone& backbone, const ModelSpec& spec,
                           std::span<const ClientState> clients, uint64_t seed) {
  std::vector<NamedTensors> params;
  params.reserve(clients.size());
  for (const ClientState& c : clients) params.push_back(c.Params());
  std::vector<EvalClient> views;
  for (size_t k = 0; k < clients.size(); ++k) {
    views.push_back({clients[k].test, &params[k]});
  }
  return Evaluate(backbone, spec, views, spec.prompt.eval_samples, seed);
}

TrainingResult RunTraining(const Backbone& backbone, const ModelSpec& spec,
                           std::vector<ClientState>& clients,
                           const Hyperparams& hyper,
                           const TrainingOptions& options) {
  hyper.Validate();
  if (clients.empty()) throw ConfigError("clients: none given");
  TrainingResult result;
  result.global = clients[0].global;
  const uint64_t frozen = backbone.Hash();
  if (!options.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options.checkpoint_dir);
  }
  for (int round = options.first_round; round <= hyper.rounds; ++round) {
    const std::vector<int> selected =
        SelectClients(static_cast<int>(clients.size()), hyper.participation,
                      options.seed, round);
    std::vector<ClientUpdate> updates(selected.size());
    ParallelFor(selected.size(), options.workers, [&](size_t i) {
      updates[i] = LocalUpdate(backbone, spec, clients[selected[i]], hyper,
                               options.seed, round);
    });
    result.global = Aggregate(updates, hyper.weighting);
    for (size_t i = 0; i < selected.size(); ++i) {
      clients[selected[i]].local = std::move(updates[i].local);
    }
    for (ClientState& c : clients) c.global = result.global;

    const uint64_t hash = backbone.Hash();
    if (hash != frozen) {
      throw ContractError("backbone parameters changed during round " +
                          std::to_string(round));
    }
    if (!options.checkpoint_dir.empty()) {
      SaveTensors(options.checkpoint_dir + "/round_" + std::to_string(round) + ".pfl",
                  RoundCheckpoint(result.global, clients, round));
    }
    const bool evaluate = hyper.eval_every > 0 &&
                          (round % hyper.eval_every == 0 || round == hyper.rounds);
    if (!evaluate) continue;
    RoundMetrics m;
    m.round = round;
    m.backbone_hash = hash;
    const uint64_t eval_seed =
        Rng::Derive(options.seed, StreamTag::kEval, {static_cast<uint64_t>(round)})
            .NextU64();
    m.eval = EvaluateClients(backbone, spec, clients, eval_seed);
    result.history.push_back(m);
    if (options.on_round && !options.on_round(m)) break;
  }
  return result;
}

ClientState AdaptNewClient(const Backbone& backbone, const ModelSpec& spec,
                           const NamedTensors& trained, ClientState client,
                           int epochs, const Hyperparams& hyper, uint64_t seed) {
  if (epochs < 0) throw ConfigError("adapt_epochs: must be >= 0");
  if (client.train.empty()) {
    throw ConfigError("client " + std::to_string(client.id) + ": empty train shard");
  }
  client.global = trained;
  if (epochs == 0) return client;
  Hyperparams h = hyper;
  h.local_epochs = epochs;
  auto head_only = [](const std::string& name) { return GroupOf(name) == "head"; };
  // Round 0 is never used by training, so the adaptation stream is distinct.
  ClientUpdate u = LocalUpdate(backbone, spec, client, h, seed, 0, head_only);
  client.global = std::move(u.global);
  client.local = std::move(u.local);
  return client;
}

NamedTensors RoundCheckpoint(const NamedTensors& global,
                             std::span<const ClientState> clients, int round) {
  NamedTensors out = global;
  for (const ClientState& c : clients) {
    for (const auto& [name, t] : c.local) {
      out.emplace("client." + std::to_string(c.id) + "." + name, t);
    }
  }
  out.emplace("meta.round", Tensor::Scalar(round));
  return out;
}

int RestoreRoundCheckpoint(const NamedTensors& checkpoint,
                           std::vector<ClientState>& clients,
                           NamedTensors& global) {
  auto it = checkpoint.find("meta.round");
  if (it == checkpoint.end()) throw ProtocolError("checkpoint: missing meta.round");
  NamedTensors restored;
  for (const auto& [name, t] : checkpoint) {
    if (name.rfind("client.", 0) == 0 || name == "meta.round") continue;
    restored.emplace(name, t);
  }
  for (ClientState& c : clients) {
    const std::string prefix = "client." + std::to_string(c.id) + ".";
    for (auto& [name, t] : c.local) {
      auto found = checkpoint.find(prefix + name);
      if (found == checkpoint.end() || found->second.shape() != t.shape()) {
        throw ProtocolError("checkpoint: missing or misshaped " + prefix + name);
      }
      t = found->second;
    }
    if (!SameStructure(c.global, restored)) {
      throw ProtocolError("checkpoint: global payload does not match the method");
    }
    c.global = restored;
  }
  global = std::move(restored);
  return static_cast<int>(it->second.item());
}

}  // namespace pfl
