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


#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pfl/errors.h"
#include "pfl/experiment.h"
#include "pfl/objective.h"
#include "support/fixtures.h"

namespace pfl {
namespace {

namespace fs = std::filesystem;

std::string ReadText(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t CountLines(const std::string& text) {
  return static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Four clients over four domains of 8x8 images, random backbone.
ExperimentConfig TinyConfig(const std::string& out) {
  ExperimentConfig c;
  const ModelSpec spec = testing::TinySpec();
  c.vit = spec.vit;
  c.prompt = spec.prompt;
  c.vpt_tokens = spec.vpt_tokens;
  c.data.num_domains = 4;
  c.data.num_classes = 3;
  c.data.samples_per_domain_class = 5;
  c.data.image_h = c.data.image_w = 8;
  c.clients = 4;
  c.seeds = {0};
  c.hyper.rounds = 3;
  c.hyper.batch_size = 4;
  c.warmup.enabled = false;
  c.summary_rounds = 2;
  c.eval_seeds = 3;
  c.v_values = {1, 2, 3};
  c.output_dir = (fs::temp_directory_path() / ("pfl_experiment_test_" + out)).string();
  fs::remove_all(c.output_dir);
  return c;
}

TEST(ConfigTest, DefaultsFollowTheProtocol) {
  const ExperimentConfig c;
  EXPECT_EQ(c.seeds, (std::vector<uint64_t>{0, 1, 2}));
  EXPECT_EQ(c.summary_rounds, 10);
  EXPECT_EQ(c.adapt_epochs, 5);
  EXPECT_EQ(c.v_values, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_GE(c.eval_seeds, 20);
  EXPECT_DOUBLE_EQ(c.hyper.lr, 0.01);
  EXPECT_DOUBLE_EQ(c.prompt.keep_prob, 0.9);
  EXPECT_EQ(c.prompt.aux_samples, 1);
  EXPECT_EQ(c.prompt.iw_samples, 1);
  EXPECT_EQ(c.prompt.eval_samples, 5);
  EXPECT_NO_THROW(c.Validate());
}

TEST(ConfigTest, TrackPresets) {
  const ExperimentConfig fs = TrackDefaults(Track::kFeatureShift);
  EXPECT_EQ(fs.clients, fs.data.num_domains);
  EXPECT_EQ(fs.hyper.participation, 1.0);
  const ExperimentConfig ls = TrackDefaults(Track::kLabelShift);
  EXPECT_EQ(ls.clients, 20);
  EXPECT_EQ(ls.s, 2);
  EXPECT_EQ(SelectClients(ls.clients, ls.hyper.participation, 0, 1).size(), 5u);
  EXPECT_NO_THROW(fs.Validate());
  EXPECT_NO_THROW(ls.Validate());
}

TEST(ConfigTest, RoundTripIsByteStable) {
  ExperimentConfig c = TinyConfig("roundtrip");
  c.methods = {Method::kHeadTune, Method::kBayesPtGaussian};
  c.track = Track::kLabelShift;
  c.rho_grid = {1e-4, 5e-4};
  c.prompt.global_layers = {0, 1};
  c.hyper.weighting = Weighting::kUniform;
  const std::string once = SerializeConfig(c);
  const std::string twice = SerializeConfig(ParseConfig(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once, SerializeConfig(ParseConfig(twice)));
}

TEST(ConfigTest, UnknownAndInvalidFieldsAreNamed) {
  try {
    ParseConfig(R"({"hyper": {"rounds": 3, "bogus": 1}})");
    FAIL() << "unknown field accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
  }
  ExperimentConfig c = TinyConfig("invalid");
  c.prompt.keep_prob = 1.5;
  try {
    c.Validate();
    FAIL() << "keep_prob 1.5 accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("keep_prob"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ParseConfig(R"({"methods": ["nope"]})"), ConfigError);
  EXPECT_THROW(ParseConfig("{not json"), ConfigError);
}

TEST(ExperimentTest, RowsSummaryAndRerun) {
  ExperimentConfig c = TinyConfig("train");
  c.methods = {Method::kHeadTune, Method::kBayesPt};
  c.seeds = {0, 1};
  const ExperimentReport report = RunExperiment(c);
  const std::string rounds = ReadText(fs::path(c.output_dir) / "rounds.csv");
  EXPECT_EQ(CountLines(rounds), 1u + 2 * 2 * 3);
  ASSERT_EQ(report.runs.size(), 4u);
  for (const RunOutcome& run : report.runs) ASSERT_EQ(run.training.history.size(), 3u);

  // summary = mean over seeds of the mean over rounds 2 and 3
  ASSERT_EQ(report.summary.size(), 4u);
  for (size_t m = 0; m < 2; ++m) {
    std::vector<double> per_seed;
    for (const RunOutcome& run : report.runs) {
      if (run.method != c.methods[m]) continue;
      const auto& h = run.training.history;
      per_seed.push_back((h[1].eval.average + h[2].eval.average) / 2.0);
    }
    EXPECT_DOUBLE_EQ(report.summary[2 * m].value.mean, MeanAndStderr(per_seed).mean);
    EXPECT_EQ(report.summary[2 * m].value.n, 2u);
  }
  EXPECT_EQ(CountLines(ReadText(fs::path(c.output_dir) / "summary.csv")), 1u + 4);
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / (report.runs[0].run_id + ".pfl")));

  const std::string first = rounds;
  RunExperiment(c);
  EXPECT_EQ(ReadText(fs::path(c.output_dir) / "rounds.csv"), first);
}

TEST(ExperimentTest, CadenceControlsRowCount) {
  ExperimentConfig c = TinyConfig("cadence");
  c.methods = {Method::kHeadTune};
  c.hyper.rounds = 4;
  c.hyper.eval_every = 2;
  RunExperiment(c);
  EXPECT_EQ(CountLines(ReadText(fs::path(c.output_dir) / "rounds.csv")), 1u + 2);
}

TEST(ExperimentTest, RhoGridRunsEncoderMethodsOncePerValue) {
  ExperimentConfig c = TinyConfig("rho");
  c.methods = {Method::kHeadTune, Method::kBayesPt};
  c.hyper.rounds = 1;
  c.summary_rounds = 1;
  c.rho_grid = {1e-4, 1e-2};
  const ExperimentReport report = RunExperiment(c);
  ASSERT_EQ(report.runs.size(), 3u);
  EXPECT_NE(report.runs[1].run_id, report.runs[2].run_id);
  EXPECT_DOUBLE_EQ(report.runs[2].encoder_lr, 1e-2);
}

TEST(GeneralizationTest, OddClientCountIsRejected) {
  ExperimentConfig c = TinyConfig("odd");
  c.clients = 3;
  c.data.num_domains = 3;
  EXPECT_THROW(RunGeneralization(c), ConfigError);
}

TEST(GeneralizationTest, ReportsUnseenHalfOnly) {
  ExperimentConfig c = TinyConfig("generalize");
  c.methods = {Method::kBayesPt};
  c.adapt_epochs = 2;
  const GeneralizationReport report = RunGeneralization(c);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].client, 2);
  EXPECT_EQ(report.rows[1].client, 3);
  EXPECT_EQ(CountLines(ReadText(fs::path(c.output_dir) / "generalization.csv")), 3u);
}

TEST(VSweepTest, FirstRowMatchesDirectEvaluation) {
  ExperimentConfig c = TinyConfig("vsweep");
  const Backbone backbone = PrepareBackbone(c);
  const RunSetup setup = PrepareRun(c, backbone, 0);
  ExperimentConfig quiet = c;
  quiet.hyper.eval_every = 0;
  const RunOutcome run =
      TrainRun(quiet, backbone, setup, Method::kBayesPt, 0, c.hyper.encoder_lr);
  const std::vector<uint64_t> seeds = SweepEvalSeeds(0, 3);
  const auto acc = VSweepAccuracies(backbone, c.Spec(Method::kBayesPt), run.clients,
                                    c.v_values, seeds);
  for (size_t vi = 0; vi < c.v_values.size(); ++vi) {
    ModelSpec spec = c.Spec(Method::kBayesPt);
    spec.prompt.eval_samples = c.v_values[vi];
    for (size_t e = 0; e < seeds.size(); ++e) {
      EXPECT_EQ(acc[vi][e], EvaluateClients(backbone, spec, run.clients, seeds[e]).average)
          << "V=" << c.v_values[vi] << " e=" << e;
    }
  }
  const std::vector<VSweepRow> rows = RunVSweep(c);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].V, 1);
  EXPECT_EQ(rows[0].accuracy.n, 3u);
  EXPECT_DOUBLE_EQ(rows[0].accuracy.mean, MeanAndStderr(acc[0]).mean);
}

TEST(AblationTest, GaussianVariantIsTheCollapsedFullMethod) {
  ExperimentConfig c = TinyConfig("collapse");
  const Backbone backbone = Backbone::Random(c.vit, 1);
  const std::vector<Instance> xs = testing::RandomInstances(backbone, 3, 2);
  std::vector<const Instance*> batch;
  for (const Instance& x : xs) batch.push_back(&x);
  const std::vector<uint64_t> seeds = {5, 6, 7};
  ModelSpec gauss = c.Spec(Method::kBayesPtGaussian);
  ModelSpec forced = c.Spec(Method::kBayesPt);
  forced.prompt.keep_prob = 1.0;
  forced.prompt.aux_samples = 0;
  const NamedTensors params = testing::PerturbedParams(forced, 3);
  const BatchResult a = BatchObjective(backbone, gauss, params, {}, batch, seeds);
  const BatchResult b = BatchObjective(backbone, forced, params, {}, batch, seeds);
  EXPECT_EQ(a.value, b.value);
  for (const auto& [name, g] : a.grads) EXPECT_EQ(g, b.grads.at(name)) << name;
}

TEST(AblationTest, ThreeColumnsOnPairedSeeds) {
  ExperimentConfig c = TinyConfig("ablate");
  c.seeds = {0, 1};
  const AblationReport report = RunAblation(c);
  ASSERT_EQ(report.per_seed.size(), 3u);
  for (const auto& column : report.per_seed) EXPECT_EQ(column.size(), 2u);
  EXPECT_EQ(report.summary.size(), 6u);
  const std::string csv = ReadText(fs::path(c.output_dir) / "ablation.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "seed,pfedbayespt,pfedbayespt-g,pfedbayespt-d");
}

TEST(StatsTest, MeanAndStderr) {
  const MeanStderr r = MeanAndStderr({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(r.mean, 2.5);
  EXPECT_NEAR(r.stderr_, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(MeanAndStderr({7.0}).stderr_, 0.0);
  EXPECT_NEAR(PooledStderr({0, 3, 2}, {0, 4, 2}), 5.0, 1e-15);
}

}  // namespace
}  // namespace pfl
