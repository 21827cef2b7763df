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


#ifndef PFL_FEDERATION_H_
#define PFL_FEDERATION_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfl/checkpoint.h"
#include "pfl/datagen.h"
#include "pfl/inference.h"
#include "pfl/model.h"
#include "pfl/objective.h"

namespace pfl {

enum class Weighting { kDataSize, kUniform };

struct Hyperparams {
  int rounds = 50;
  int local_epochs = 1;
  int batch_size = 16;
  double lr = 0.01;           // prompts and head
  double encoder_lr = 0.001;  // encoder
  double participation = 1.0;
  Weighting weighting = Weighting::kDataSize;
  int eval_every = 1;  // 0 disables evaluation during training

  void Validate() const;
};

struct ClientState {
  int id = 0;
  std::vector<Instance> train;
  std::vector<Instance> test;
  NamedTensors global;  // synchronised copy of the server payload
  NamedTensors local;   // persistent local head, empty for shared-head methods

  // global ∪ local, the parameters this client predicts with.
  NamedTensors Params() const;
};

// Clean-pass caches for every sample of `data`, in sample order.
std::vector<Instance> MakeInstances(const Backbone& backbone, const Dataset& data,
                                    int workers);

// One client per shard, synchronised with `global`; local heads are
// initialised from (seed, client id).
std::vector<ClientState> MakeClients(const ModelSpec& spec,
                                     std::span<const Instance> pool,
                                     const Partition& partition,
                                     const NamedTensors& global, uint64_t seed);

// round(fraction * n) distinct ids in increasing order, drawn from the
// substream (seed, round).
std::vector<int> SelectClients(int n, double fraction, uint64_t seed, int round);

// [begin, end) ranges of the ceil(n / batch_size) mini-batches of one epoch;
// the last one may be smaller.
std::vector<std::pair<size_t, size_t>> MiniBatches(size_t n, int batch_size);

struct ClientUpdate {
  NamedTensors global;
  NamedTensors local;
  size_t num_samples = 0;
};

// E epochs of mini-batch gradient ascent on the method's batch objective.
// `trainable` restricts which tensors move (all when empty).
ClientUpdate LocalUpdate(const Backbone& backbone, const ModelSpec& spec,
                         const ClientState& client, const Hyperparams& hyper,
                         uint64_t seed, int round,
                         const TrainablePredicate& trainable = {});

// Elementwise weighted mean; weights are normalised internally.
NamedTensors Aggregate(std::span<const NamedTensors> payloads,
                       std::span<const double> weights);
NamedTensors Aggregate(std::span<const ClientUpdate> updates, Weighting weighting);

struct RoundMetrics {
  int round = 0;  // 1-based
  EvalResult eval;
  uint64_t backbone_hash = 0;
};

struct TrainingResult {
  NamedTensors global;
  std::vector<RoundMetrics> history;
};

// Called after every evaluated round; returning false stops training early.
using RoundCallback = std::function<bool(const RoundMetrics&)>;

struct TrainingOptions {
  uint64_t seed = 0;
  int workers = 1;
  int first_round = 1;          // > 1 when resuming from a checkpoint
  std::string checkpoint_dir;   // round checkpoints when non-empty
  RoundCallback on_round;
};

// Select, update locally, aggregate, synchronise to all clients; repeat.
// Throws ContractError if the backbone hash ever changes.
TrainingResult RunTraining(const Backbone& backbone, const ModelSpec& spec,
                           std::vector<ClientState>& clients,
                           const Hyperparams& hyper,
                           const TrainingOptions& options);

// Accuracy of every client's test split with its own parameters.
EvalResult EvaluateClients(const Backbone& backbone, const ModelSpec& spec,
                           std::span<const ClientState> clients, uint64_t seed);

// Head-only fine-tuning of a client unseen during training. Prompts and
// encoder stay at `trained`.
ClientState AdaptNewClient(const Backbone& backbone, const ModelSpec& spec,
                           const NamedTensors& trained, ClientState client,
                           int epochs, const Hyperparams& hyper, uint64_t seed);

// Round checkpoint: the global payload, every local head as
// "client.<id>.<name>", and "meta.round".
NamedTensors RoundCheckpoint(const NamedTensors& global,
                             std::span<const ClientState> clients, int round);
// Restores clients from a RoundCheckpoint; returns the round it was taken at.
int RestoreRoundCheckpoint(const NamedTensors& checkpoint,
                           std::vector<ClientState>& clients,
                           NamedTensors& global);

}  // namespace pfl

#endif  // PFL_FEDERATION_H_
