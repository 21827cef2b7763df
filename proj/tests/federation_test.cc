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


#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pfl/errors.h"
#include "pfl/federation.h"
#include "pfl/ops.h"
#include "pfl/params.h"
#include "support/fixtures.h"

namespace pfl {
namespace {

using testing::PerturbedParams;
using testing::RandomInstances;
using testing::TinySpec;

TEST(SelectClientsTest, FullParticipationKeepsOrder) {
  const std::vector<int> ids = SelectClients(7, 1.0, 3, 5);
  EXPECT_EQ(ids, (std::vector<int>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(SelectClientsTest, FivePercentOfOneHundred) {
  for (int round = 1; round <= 20; ++round) {
    const std::vector<int> ids = SelectClients(100, 0.05, 1, round);
    ASSERT_EQ(ids.size(), 5u);
    for (size_t i = 1; i < ids.size(); ++i) EXPECT_LT(ids[i - 1], ids[i]);
    EXPECT_EQ(ids, SelectClients(100, 0.05, 1, round));
  }
}

TEST(SelectClientsTest, SelectionFrequencyIsUniform) {
  const int n = 20, rounds = 10000;
  const double f = 0.25;
  std::vector<int> count(n, 0);
  for (int r = 1; r <= rounds; ++r)
    for (int id : SelectClients(n, f, 2, r)) ++count[id];
  const double se = std::sqrt(rounds * f * (1.0 - f));
  for (int k = 0; k < n; ++k) EXPECT_LT(std::abs(count[k] - rounds * f), 3.0 * se) << k;
}

TEST(SelectClientsTest, EmptySelectionIsAConfigError) {
  EXPECT_THROW(SelectClients(10, 0.04, 0, 1), ConfigError);
  EXPECT_THROW(SelectClients(10, 0.0, 0, 1), ConfigError);
  EXPECT_THROW(SelectClients(10, 1.5, 0, 1), ConfigError);
}

TEST(MiniBatchesTest, CeilingCountAndShortTail) {
  const auto b = MiniBatches(10, 4);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.back(), (std::pair<size_t, size_t>{8, 10}));
  EXPECT_EQ(MiniBatches(12, 4).size(), 3u);
  const auto whole = MiniBatches(5, 16);
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0], (std::pair<size_t, size_t>{0, 5}));
}

TEST(AggregateTest, WeightedArithmetic) {
  const std::vector<NamedTensors> payloads = {{{"w", Tensor({1}, 0.0)}},
                                              {{"w", Tensor({1}, 4.0)}}};
  const std::vector<double> weights = {1.0, 3.0};
  EXPECT_EQ(Aggregate(payloads, weights).at("w")[0], 3.0);
}

TEST(AggregateTest, IdenticalUpdatesAreAFixedPoint) {
  const NamedTensors p = PerturbedParams(TinySpec(), 1);
  std::vector<ClientUpdate> updates(4, ClientUpdate{p, {}, 0});
  for (size_t k = 0; k < 4; ++k) updates[k].num_samples = 3 + 5 * k;
  const NamedTensors out = Aggregate(updates, Weighting::kDataSize);
  for (const auto& [name, t] : p) EXPECT_LT(MaxAbsDiff(out.at(name), t), 1e-12) << name;
}

TEST(AggregateTest, MatchesPerScalarLoop) {
  std::vector<ClientUpdate> updates;
  for (int k = 0; k < 5; ++k) {
    updates.push_back({PerturbedParams(TinySpec(), 10 + k, 1.0), {}, size_t(7 + 3 * k)});
  }
  for (Weighting w : {Weighting::kDataSize, Weighting::kUniform}) {
    const NamedTensors out = Aggregate(updates, w);
    for (const auto& [name, t] : out) {
      for (size_t i = 0; i < t.size(); ++i) {
        double num = 0.0, den = 0.0;
        for (const ClientUpdate& u : updates) {
          const double wk = w == Weighting::kDataSize ? u.num_samples : 1.0;
          num += wk * u.global.at(name)[i];
          den += wk;
        }
        ASSERT_LT(std::abs(t[i] - num / den), 1e-12) << name << "[" << i << "]";
      }
    }
  }
}

TEST(AggregateTest, StructuralMismatchIsAProtocolError) {
  NamedTensors a = {{"w", Tensor({2})}}, b = {{"w", Tensor({3})}}, c = {{"v", Tensor({2})}};
  const std::vector<double> w = {1.0, 1.0};
  EXPECT_THROW(Aggregate(std::vector<NamedTensors>{a, b}, w), ProtocolError);
  EXPECT_THROW(Aggregate(std::vector<NamedTensors>{a, c}, w), ProtocolError);
  EXPECT_THROW(Aggregate(std::span<const ClientUpdate>{}, Weighting::kUniform), ProtocolError);
}

class FederationTest : public ::testing::Test {
 protected:
  Backbone backbone_ = Backbone::Random(TinySpec().vit, 3);

  std::vector<ClientState> Clients(const ModelSpec& spec, int n, int per_client,
                                   uint64_t seed) {
    std::vector<ClientState> out;
    const NamedTensors global = InitGlobalParams(spec, seed);
    for (int k = 0; k < n; ++k) {
      ClientState c;
      c.id = k;
      c.train = RandomInstances(backbone_, per_client, seed * 10 + k);
      c.test = RandomInstances(backbone_, 4, seed * 10 + k + 500);
      c.global = global;
      c.local = InitLocalParams(spec, seed + k);
      out.push_back(std::move(c));
    }
    return out;
  }

  Hyperparams Hyper(int rounds) {
    Hyperparams h;
    h.rounds = rounds;
    h.batch_size = 4;
    h.lr = 0.05;
    h.encoder_lr = 0.01;
    return h;
  }
};

TEST_F(FederationTest, ZeroRatesReturnTheIncomingModel) {
  for (Method method : {Method::kBayesPt, Method::kFedVpt}) {
    const ModelSpec spec = TinySpec(method);
    const std::vector<ClientState> clients = Clients(spec, 1, 6, 1);
    Hyperparams h = Hyper(1);
    h.lr = h.encoder_lr = 0.0;
    const ClientUpdate u = LocalUpdate(backbone_, spec, clients[0], h, 2, 1);
    EXPECT_EQ(u.global, clients[0].global);
    EXPECT_EQ(u.local, clients[0].local);
    EXPECT_EQ(u.num_samples, 6u);
  }
}

// Head-Tune, one full batch, one epoch: theta + eta * mean_i cls_i^T (y_i - p_i).
TEST_F(FederationTest, OneStepMatchesHandComputedGradient) {
  const ModelSpec spec = TinySpec(Method::kHeadTune);
  std::vector<ClientState> clients = Clients(spec, 1, 5, 4);
  clients[0].global = PerturbedParams(spec, 5, 0.3);
  Hyperparams h = Hyper(1);
  h.batch_size = 16;
  const ClientUpdate u = LocalUpdate(backbone_, spec, clients[0], h, 6, 1);
  const Tensor& w = clients[0].global.at("head.weight");
  const Tensor& b = clients[0].global.at("head.bias");
  Tensor gw(w.shape(), 0.0), gb(b.shape(), 0.0);
  const size_t d = w.dim(0), c = w.dim(1);
  for (const Instance& x : clients[0].train) {
    std::vector<double> logits(c);
    for (size_t j = 0; j < c; ++j) {
      logits[j] = b[j];
      for (size_t i = 0; i < d; ++i) logits[j] += x.cls[i] * w.at(i, j);
    }
    const std::vector<double> p = Softmax(logits);
    for (size_t j = 0; j < c; ++j) {
      const double r = (static_cast<int>(j) == x.label ? 1.0 : 0.0) - p[j];
      gb[j] += r / 5.0;
      for (size_t i = 0; i < d; ++i) gw.at(i, j) += x.cls[i] * r / 5.0;
    }
  }
  for (size_t k = 0; k < w.size(); ++k)
    EXPECT_NEAR(u.global.at("head.weight")[k], w[k] + h.lr * gw[k], 1e-12);
  for (size_t k = 0; k < b.size(); ++k)
    EXPECT_NEAR(u.global.at("head.bias")[k], b[k] + h.lr * gb[k], 1e-12);
}

TEST_F(FederationTest, EmptyShardIsAConfigError) {
  const ModelSpec spec = TinySpec();
  std::vector<ClientState> clients = Clients(spec, 1, 3, 7);
  clients[0].train.clear();
  EXPECT_THROW(LocalUpdate(backbone_, spec, clients[0], Hyper(1), 0, 1), ConfigError);
}

TEST_F(FederationTest, ZeroRoundsReturnInitialModel) {
  const ModelSpec spec = TinySpec();
  std::vector<ClientState> clients = Clients(spec, 2, 4, 8);
  const TrainingResult r = RunTraining(backbone_, spec, clients, Hyper(0), {});
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.global, clients[0].global);
}

TEST_F(FederationTest, SingleClientIsPureLocalTraining) {
  const ModelSpec spec = TinySpec();
  std::vector<ClientState> clients = Clients(spec, 1, 6, 9);
  ClientState alone = clients[0];
  const Hyperparams h = Hyper(3);
  TrainingOptions options;
  options.seed = 10;
  const TrainingResult r = RunTraining(backbone_, spec, clients, h, options);
  for (int round = 1; round <= 3; ++round) {
    ClientUpdate u = LocalUpdate(backbone_, spec, alone, h, 10, round);
    alone.global = u.global;
  }
  EXPECT_EQ(r.global, alone.global);
}

// Two clients holding the same shard follow the single-client trajectory
// when every batch is the full shard, and average to the same accuracy.
TEST_F(FederationTest, DuplicatedShardMatchesSingleClient) {
  const ModelSpec spec = TinySpec(Method::kHeadTune);
  std::vector<ClientState> one = Clients(spec, 1, 6, 11);
  std::vector<ClientState> two = {one[0], one[0]};
  two[1].id = 1;
  Hyperparams h = Hyper(4);
  h.batch_size = 64;
  TrainingOptions options;
  options.seed = 12;
  const TrainingResult a = RunTraining(backbone_, spec, one, h, options);
  const TrainingResult b = RunTraining(backbone_, spec, two, h, options);
  for (const auto& [name, t] : a.global) EXPECT_LT(MaxAbsDiff(t, b.global.at(name)), 1e-12);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(b.history[i].eval.per_client[0], b.history[i].eval.per_client[1]);
    EXPECT_EQ(a.history[i].eval.average, b.history[i].eval.average);
  }
}

TEST_F(FederationTest, SeededRunsAreBitIdenticalAndBackboneStaysFrozen) {
  const ModelSpec spec = TinySpec();
  auto run = [&] {
    std::vector<ClientState> clients = Clients(spec, 3, 5, 13);
    Hyperparams h = Hyper(3);
    h.participation = 0.67;
    TrainingOptions options;
    options.seed = 14;
    options.workers = 2;
    return RunTraining(backbone_, spec, clients, h, options);
  };
  const TrainingResult a = run(), b = run();
  EXPECT_EQ(a.global, b.global);
  ASSERT_EQ(a.history.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.history[i].eval.per_client, b.history[i].eval.per_client);
    EXPECT_EQ(a.history[i].backbone_hash, backbone_.Hash());
  }
  EXPECT_TRUE(SameStructure(a.global, InitGlobalParams(spec, 0)));
}

TEST_F(FederationTest, LocalHeadsStayOffTheWire) {
  const ModelSpec spec = TinySpec(Method::kFedVpt);
  std::vector<ClientState> clients = Clients(spec, 2, 5, 15);
  TrainingOptions options;
  options.seed = 16;
  const TrainingResult r = RunTraining(backbone_, spec, clients, Hyper(2), options);
  EXPECT_EQ(r.global.count("head.weight"), 0u);
  EXPECT_EQ(r.global.count("prompt.global"), 1u);
  EXPECT_NE(clients[0].local.at("head.weight"), clients[1].local.at("head.weight"));
}

TEST_F(FederationTest, ResumeFromRoundCheckpoint) {
  const ModelSpec spec = TinySpec(Method::kFedVptDeep);
  Hyperparams h = Hyper(4);
  TrainingOptions options;
  options.seed = 17;
  std::vector<ClientState> full = Clients(spec, 2, 5, 18);
  const TrainingResult straight = RunTraining(backbone_, spec, full, h, options);

  std::vector<ClientState> part = Clients(spec, 2, 5, 18);
  Hyperparams first = h;
  first.rounds = 2;
  const TrainingResult head = RunTraining(backbone_, spec, part, first, options);
  const NamedTensors ckpt = DeserializeTensors(
      SerializeTensors(RoundCheckpoint(head.global, part, 2)));

  std::vector<ClientState> resumed = Clients(spec, 2, 5, 18);
  NamedTensors global;
  const int round = RestoreRoundCheckpoint(ckpt, resumed, global);
  EXPECT_EQ(round, 2);
  options.first_round = round + 1;
  const TrainingResult tail = RunTraining(backbone_, spec, resumed, h, options);
  EXPECT_EQ(tail.global, straight.global);
  ASSERT_EQ(tail.history.size(), 2u);
  EXPECT_EQ(tail.history[1].eval.per_client, straight.history[3].eval.per_client);
  for (size_t k = 0; k < 2; ++k) EXPECT_EQ(resumed[k].local, full[k].local);
}

TEST_F(FederationTest, AdaptationTrainsOnlyTheHead) {
  const ModelSpec spec = TinySpec();
  std::vector<ClientState> clients = Clients(spec, 1, 6, 19);
  const NamedTensors trained = PerturbedParams(spec, 20);
  const ClientState zero = AdaptNewClient(backbone_, spec, trained, clients[0], 0, Hyper(1), 21);
  EXPECT_EQ(zero.Params(), trained);
  const ClientState adapted =
      AdaptNewClient(backbone_, spec, trained, clients[0], 2, Hyper(1), 21);
  for (const auto& [name, t] : adapted.global) {
    if (GroupOf(name) == "head") {
      EXPECT_NE(t, trained.at(name)) << name;
    } else {
      EXPECT_EQ(t, trained.at(name)) << name;
    }
  }
  clients[0].train.clear();
  EXPECT_THROW(AdaptNewClient(backbone_, spec, trained, clients[0], 1, Hyper(1), 0),
               ConfigError);
}

}  // namespace
}  // namespace pfl
