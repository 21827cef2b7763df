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


#ifndef PFL_EXPERIMENT_H_
#define PFL_EXPERIMENT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfl/datagen.h"
#include "pfl/federation.h"
#include "pfl/model.h"

namespace pfl {

enum class Track { kFeatureShift, kLabelShift };

std::string TrackName(Track track);
Track ParseTrack(const std::string& name);

// Centralised pre-training that stands in for a pretrained checkpoint. Its
// data uses its own domain styles and samples.
struct WarmupConfig {
  bool enabled = true;
  int epochs = 8;
  int domains = 30;
  int samples_per_domain_class = 4;
  uint64_t template_seed = 11;
  uint64_t style_seed = 202;
  uint64_t data_seed = 99;
  uint64_t backbone_seed = 7;
  int batch_size = 16;
  double lr = 0.05;
  std::string cache_dir;  // reuse warmed backbones across runs when set
};

struct ExperimentConfig {
  std::vector<Method> methods = {Method::kBayesPt};
  std::vector<uint64_t> seeds = {0, 1, 2};
  Track track = Track::kFeatureShift;
  int clients = 6;
  int m = 1;  // domains per client (feature shift)
  int s = 2;  // classes per client (label shift)
  SyntheticSpec data;
  ViTConfig vit;
  PromptConfig prompt;
  int vpt_tokens = 10;
  Hyperparams hyper;
  WarmupConfig warmup;
  // Encoder learning rates tried by the sweep; empty means hyper.encoder_lr.
  std::vector<double> rho_grid;
  int summary_rounds = 10;  // trailing rounds averaged in the summary
  int adapt_epochs = 5;
  std::vector<int> v_values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int eval_seeds = 20;
  std::string output_dir = "out";
  bool save_checkpoints = true;

  // Throws ConfigError naming the first invalid field.
  void Validate() const;
  ModelSpec Spec(Method method) const;
};

// Desk-scale preset of a track. Feature shift: six domains, one client per
// domain, full participation. Label shift: one domain of 200 samples per
// class, 20 clients, s = 2, five clients sampled per round.
ExperimentConfig TrackDefaults(Track track);

nlohmann::ordered_json ToJson(const ExperimentConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig ConfigFromJson(const nlohmann::ordered_json& json);
std::string SerializeConfig(const ExperimentConfig& config);
ExperimentConfig ParseConfig(const std::string& text);
ExperimentConfig LoadConfig(const std::string& path);

// Warmed (or random) backbone; cached under warmup.cache_dir when set.
Backbone PrepareBackbone(const ExperimentConfig& config);

// Data, partition and clients of one seed.
struct RunSetup {
  Dataset data;
  Partition partition;
  std::vector<Instance> pool;
};
RunSetup PrepareRun(const ExperimentConfig& config, const Backbone& backbone,
                    uint64_t seed);

struct RunOutcome {
  std::string run_id;
  Method method = Method::kBayesPt;
  uint64_t seed = 0;
  double encoder_lr = 0.0;
  TrainingResult training;
  std::vector<ClientState> clients;
};

// One training run of `method` under `seed`.
RunOutcome TrainRun(const ExperimentConfig& config, const Backbone& backbone,
                    const RunSetup& setup, Method method, uint64_t seed,
                    double encoder_lr, const RoundCallback& on_round = {});

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  size_t n = 0;
};
// Sample mean and standard error (sd / sqrt(n), zero for n < 2).
MeanStderr MeanAndStderr(const std::vector<double>& values);
// sqrt(se_a^2 + se_b^2).
double PooledStderr(const MeanStderr& a, const MeanStderr& b);
// Mean Average and Worst Local accuracy over the evaluated rounds among the
// final `rounds` rounds.
std::pair<double, double> TrailingMeans(const TrainingResult& result,
                                        int total_rounds, int rounds);

struct SummaryRow {
  std::string method;
  std::string metric;
  MeanStderr value;
};

struct ExperimentReport {
  std::vector<RunOutcome> runs;
  std::vector<SummaryRow> summary;
};

// method x rho x seed grid; writes rounds.csv, summary.csv, config.json and
// final checkpoints under config.output_dir.
ExperimentReport RunExperiment(const ExperimentConfig& config);

struct GeneralizationRow {
  std::string method;
  uint64_t seed = 0;
  int client = 0;
  double zero_shot = 0.0;
  double adapted = 0.0;
};
struct GeneralizationReport {
  std::vector<GeneralizationRow> rows;
  std::vector<SummaryRow> summary;
};
// Trains on the first half of the clients, then adapts and evaluates the
// other half. Writes generalization.csv and generalization_summary.csv.
GeneralizationReport RunGeneralization(const ExperimentConfig& config);

struct VSweepRow {
  std::string method;
  uint64_t seed = 0;
  int V = 1;
  MeanStderr accuracy;  // Average accuracy over evaluation seeds
};
// Average accuracy [v][e] of the trained clients for every V in `v_values`
// and evaluation seed e. One pass at the largest V serves every smaller V:
// a V-sample prediction uses the first V mask sets of a larger one, so entry
// [v][e] equals EvaluateClients at that V with eval seed e.
std::vector<std::vector<double>> VSweepAccuracies(
    const Backbone& backbone, const ModelSpec& spec,
    std::span<const ClientState> clients, std::span<const int> v_values,
    std::span<const uint64_t> eval_seeds);
// Evaluation seeds used by the sweep of run `seed`.
std::vector<uint64_t> SweepEvalSeeds(uint64_t seed, int count);
// Trains (methods x seeds) and sweeps V. Writes vsweep.csv.
std::vector<VSweepRow> RunVSweep(const ExperimentConfig& config);

struct AblationReport {
  std::vector<SummaryRow> summary;      // per variant
  std::vector<std::string> flags;       // inverted comparisons
  std::vector<std::vector<double>> per_seed;  // [variant][seed] trailing Average
};
// Full method, Gaussian and deterministic variants on paired seeds. Writes
// ablation.csv and ablation_summary.csv.
AblationReport RunAblation(const ExperimentConfig& config);

// Writes `text` to dir/name, creating dir.
void WriteFile(const std::string& dir, const std::string& name,
               const std::string& text);

}  // namespace pfl

#endif  // PFL_EXPERIMENT_H_
