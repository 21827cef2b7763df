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
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pfl/errors.h"
#include "pfl/grad_suite.h"
#include "pfl/objective.h"
#include "pfl/ops.h"
#include "support/fixtures.h"
#include "support/sivi_toy.h"

namespace pfl {
namespace {

using testing::PerturbedParams;
using testing::RandomInstances;
using testing::TinySpec;

auto AllTrainable = [](const std::string&) { return true; };

TEST(PriorTest, StandardNormal) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(PriorLogDensity(Tensor({1})), -half_log_2pi, 1e-14);
  EXPECT_NEAR(PriorLogDensity(Tensor({3, 1, 5})), -15 * half_log_2pi, 1e-12);
  Rng rng(1);
  Tensor p({2, 3});
  for (double& v : p.values()) v = rng.Normal();
  Graph g;
  const double ref = GaussianLogDensity(g.Constant(p), g.Constant(Tensor({2, 3}, 0.0)),
                                        g.Constant(Tensor({2, 3}, 1.0)))
                         .item();
  EXPECT_NEAR(PriorLogDensity(p), ref, 1e-12);
}

TEST(SurrogateBoundTest, LogMixtureIsBoundedByLargestComponent) {
  Graph g;
  ImportanceSample s;
  s.log_q_own = g.Constant(Tensor::Scalar(-3.0));
  s.log_q_aux = {g.Constant(Tensor::Scalar(-1.0)), g.Constant(Tensor::Scalar(-7.0))};
  const double omega = LogMixtureDensity(s).item();
  EXPECT_LE(omega, -1.0);
  EXPECT_NEAR(omega, std::log((std::exp(-3.0) + std::exp(-1.0) + std::exp(-7.0)) / 3.0),
              1e-14);
  EXPECT_THROW(SurrogateBound({}), ArgumentError);
}

class ObjectiveTest : public ::testing::Test {
 protected:
  ModelSpec spec_ = TinySpec();
  Backbone backbone_ = Backbone::Random(spec_.vit, 5);
  Tensor image_ = testing::RandomImage(spec_.vit, 6);
  Instance x_ = MakeInstance(backbone_, image_, 2, 0, 0);
  NamedTensors params_ = PerturbedParams(spec_, 7);

  ElboTerms Elbo(Graph& g, const PromptConfig& config, const SurrogateDraws& draws,
                 const NamedTensors& params) {
    BoundModel m = BindModel(g, backbone_, spec_, params, AllTrainable);
    return SurrogateElbo(m, x_, config, draws);
  }
};

// S = 0, J = 1: log p(y|p, x) + log N(p; 0, I) - log q(p | psi), each term
// recomputed from value-level pieces.
TEST_F(ObjectiveTest, SingleSampleElboTermByTerm) {
  PromptConfig config = spec_.prompt;
  config.aux_samples = 0;
  config.iw_samples = 1;
  Rng rng(8);
  const SurrogateDraws draws = DrawSurrogate(config, spec_.vit, rng);
  Graph g;
  ElboTerms terms = Elbo(g, config, draws, params_);

  const PromptPosterior psi = EncodePsi(SelectPrefix(params_, "encoder."),
                                        ApplyMasks(x_.features, draws.masks[0]), spec_.vit,
                                        config);
  const Tensor noise = Stack(draws.noise[0]);
  Tensor p = psi.mean;
  double log_q = 0.0;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] += psi.stddev[i] * noise[i];
    log_q += -0.5 * noise[i] * noise[i] - std::log(psi.stddev[i]) - half_log_2pi;
  }
  const Tensor logits = PromptedForward(
      backbone_, image_, ConcatGlobal(params_.at("prompt.global"), p), params_,
      DepthMode::kDeep);
  const double log_lik = logits[x_.label] - LogSumExp(logits.values());
  const double log_prior = PriorLogDensity(p);

  const ImportanceSample& s = terms.samples.at(0);
  EXPECT_TRUE(s.log_q_aux.empty());
  EXPECT_LT(std::abs(s.log_lik.item() - log_lik), 1e-12);
  EXPECT_LT(std::abs(s.log_prior.item() - log_prior), 1e-12);
  EXPECT_LT(std::abs(s.log_q_own.item() - log_q), 1e-12);
  EXPECT_LT(std::abs(terms.value.item() - (log_lik + log_prior - log_q)), 1e-12);
}

// Zero head weights make the likelihood independent of p and a zero encoder
// gives psi = N(0, I); at pi = 1 the bound equals log p(y|x) for every draw.
TEST_F(ObjectiveTest, PriorEqualsPosteriorCollapse) {
  NamedTensors params = params_;
  for (auto& [name, t] : params)
    if (GroupOf(name) == "encoder") t.Fill(0.0);
  params["head.weight"].Fill(0.0);
  const Tensor& bias = params.at("head.bias");
  const double log_py = bias[x_.label] - LogSumExp(bias.values());
  for (int S : {0, 1, 4}) {
    PromptConfig config = spec_.prompt;
    config.keep_prob = 1.0;
    config.aux_samples = S;
    config.iw_samples = 3;
    Rng rng(9 + S);
    Graph g;
    EXPECT_NEAR(Elbo(g, config, DrawSurrogate(config, spec_.vit, rng), params).value.item(),
                log_py, 1e-12);
  }
  // With stochastic masks the zero encoder still maps every mask to N(0, I).
  PromptConfig config = spec_.prompt;
  config.keep_prob = 0.5;
  config.aux_samples = 2;
  Rng rng(20);
  Graph g;
  EXPECT_NEAR(Elbo(g, config, DrawSurrogate(config, spec_.vit, rng), params).value.item(),
              log_py, 1e-12);
}

TEST_F(ObjectiveTest, KeepProbOneMakesBoundInvariantInS) {
  std::vector<double> values;
  for (int S : {0, 1, 2, 4}) {
    PromptConfig config = spec_.prompt;
    config.keep_prob = 1.0;
    config.aux_samples = S;
    config.iw_samples = 2;
    Rng rng(11);
    Graph g;
    values.push_back(Elbo(g, config, DrawSurrogate(config, spec_.vit, rng), params_).value.item());
  }
  for (double v : values) EXPECT_NEAR(v, values[0], 1e-10);
}

TEST_F(ObjectiveTest, AuxiliaryDrawsDoNotShiftImportanceSamples) {
  PromptConfig a = spec_.prompt, b = spec_.prompt;
  a.aux_samples = 0;
  b.aux_samples = 3;
  Rng ra(12), rb(12);
  const SurrogateDraws da = DrawSurrogate(a, spec_.vit, ra);
  const SurrogateDraws db = DrawSurrogate(b, spec_.vit, rb);
  ASSERT_EQ(da.masks.size(), db.masks.size());
  EXPECT_EQ(da.masks[0].masks, db.masks[0].masks);
  EXPECT_EQ(da.noise[0], db.noise[0]);
  EXPECT_EQ(db.aux_masks.size(), 3u);
}

// Paired main draws: the mean of L_S - L_0 over many evaluations is
// non-negative up to two standard errors.
TEST_F(ObjectiveTest, AuxiliarySamplesTightenTheBound) {
  const int n = 3000;
  for (int S : {1, 2, 4}) {
    PromptConfig c0 = spec_.prompt, cs = spec_.prompt;
    c0.keep_prob = cs.keep_prob = 0.5;
    c0.aux_samples = 0;
    cs.aux_samples = S;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      Rng r0(1000 + i), rs(1000 + i);
      Graph g0, gs;
      const double d =
          Elbo(gs, cs, DrawSurrogate(cs, spec_.vit, rs), params_).value.item() -
          Elbo(g0, c0, DrawSurrogate(c0, spec_.vit, r0), params_).value.item();
      sum += d;
      sq += d * d;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
    EXPECT_GE(mean, -2.0 * se) << "S=" << S;
  }
}

TEST_F(ObjectiveTest, GradientsMatchFiniteDifferences) {
  GradSuiteOptions options;
  options.model_coords = 6;
  for (const GradSuiteEntry& e : RunGradSuite(spec_, options)) {
    EXPECT_TRUE(e.passed()) << e.name << " " << e.report.worst;
  }
}

TEST_F(ObjectiveTest, BatchObjective) {
  const std::vector<Instance> data = RandomInstances(backbone_, 3, 13);
  const uint64_t seeds[] = {101, 202, 303};
  auto batch = [&](std::vector<const Instance*> xs, std::vector<uint64_t> s) {
    return BatchObjective(backbone_, spec_, params_, AllTrainable, xs, s);
  };
  auto single = [&](const Instance& x, uint64_t seed) {
    Graph g;
    BoundModel m = BindModel(g, backbone_, spec_, params_, AllTrainable);
    Rng rng(seed);
    return SurrogateElbo(m, x, EffectivePromptConfig(spec_), rng).item();
  };
  const BatchResult one = batch({&data[0]}, {seeds[0]});
  EXPECT_EQ(one.value, single(data[0], seeds[0]));

  const BatchResult twice = batch({&data[0], &data[0]}, {seeds[0], seeds[0]});
  EXPECT_NEAR(twice.value, one.value, 1e-14);
  for (const auto& [name, grad] : one.grads) {
    EXPECT_LT(MaxAbsDiff(grad, twice.grads.at(name)), 1e-14) << name;
  }

  const BatchResult three = batch({&data[0], &data[1], &data[2]},
                                  {seeds[0], seeds[1], seeds[2]});
  double manual = 0.0;
  NamedTensors grad_sum = ZerosLike(three.grads);
  for (int i = 0; i < 3; ++i) {
    manual += single(data[i], seeds[i]) / 3.0;
    AddScaled(grad_sum, batch({&data[i]}, {seeds[i]}).grads, 1.0 / 3.0);
  }
  EXPECT_NEAR(three.value, manual, 1e-12);
  for (const auto& [name, grad] : three.grads) {
    EXPECT_LT(MaxAbsDiff(grad, grad_sum.at(name)), 1e-12) << name;
  }
  EXPECT_THROW(batch({}, {}), ArgumentError);
}

TEST_F(ObjectiveTest, FrozenGroupsReceiveNoGradient) {
  const BatchResult r = BatchObjective(
      backbone_, spec_, params_, [](const std::string& n) { return GroupOf(n) == "head"; },
      std::vector<const Instance*>{&x_}, std::vector<uint64_t>{1});
  for (const auto& [name, grad] : r.grads) EXPECT_EQ(GroupOf(name), "head");
  EXPECT_EQ(r.grads.size(), 2u);
}

// One-dimensional model: Monte-Carlo means against quadrature.
TEST(SiviToyTest, MonteCarloMatchesQuadrature) {
  toy::ToySivi model;
  const double log_evidence =
      -0.5 * std::log(2.0 * std::numbers::pi * (1.0 + model.tau * model.tau)) -
      model.y * model.y / (2.0 * (1.0 + model.tau * model.tau));
  for (int J : {1, 5}) {
    double previous = -1e300;
    for (int S : {0, 1, 4}) {
      const double ref = toy::Quadrature(model, S, J);
      const toy::MonteCarlo mc = toy::Simulate(model, S, J, 20000, 31 * S + J);
      EXPECT_LT(std::abs(mc.mean - ref), 3.0 * mc.stderr_) << "S=" << S << " J=" << J;
      EXPECT_LT(ref, log_evidence);
      EXPECT_GT(ref, previous);
      previous = ref;
    }
  }
  for (int S : {0, 1, 4}) EXPECT_GT(toy::Quadrature(model, S, 5), toy::Quadrature(model, S, 1));
}

TEST(SiviToyTest, KeepProbOneCollapsesAuxiliaryTerms) {
  toy::ToySivi model;
  model.keep_prob = 1.0;
  for (int J : {1, 5}) {
    for (uint64_t seed = 0; seed < 50; ++seed) {
      Rng r0(seed);
      const double base = toy::Estimate(model, 0, J, r0);
      for (int S : {1, 4}) {
        Rng rs(seed);
        EXPECT_NEAR(toy::Estimate(model, S, J, rs), base, 1e-10);
      }
    }
  }
  for (int J : {1, 5}) {
    const double q0 = toy::Quadrature(model, 0, J);
    for (int S : {1, 4}) EXPECT_NEAR(toy::Quadrature(model, S, J), q0, 1e-10);
  }
}

}  // namespace
}  // namespace pfl
