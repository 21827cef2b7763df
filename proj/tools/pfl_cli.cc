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


// Command-line front end: train, generalize, vsweep, ablate, gradcheck and
// datagen. Flags override values loaded with --config.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pfl/checkpoint.h"
#include "pfl/datagen.h"
#include "pfl/errors.h"
#include "pfl/experiment.h"
#include "pfl/grad_suite.h"

namespace {

struct Overrides {
  std::string config_path;
  std::vector<uint64_t> seeds;
  std::vector<std::string> methods;
  std::string out;
  std::string track;
  std::optional<int> clients, m, s, rounds, eval_every, V, S, J, epochs, batch;
  std::optional<double> frac, pi, lr, encoder_lr;
  std::optional<int> eval_seeds;
  bool rho_sweep = false;
  std::string cache_dir;
};

void AddCommonFlags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seeds, "run seed (repeatable)");
  app->add_option("--method", o.methods,
                  "head-tune, fedvpt, fedvpt-d, pfedbayespt, pfedbayespt-g, pfedbayespt-d");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--track", o.track, "feature-shift or label-shift");
  app->add_option("--clients", o.clients, "number of clients");
  app->add_option("--m", o.m, "domains per client (feature shift)");
  app->add_option("--s", o.s, "classes per client (label shift)");
  app->add_option("--rounds", o.rounds, "communication rounds");
  app->add_option("--eval-every", o.eval_every, "evaluation cadence in rounds");
  app->add_option("--frac", o.frac, "client participation fraction");
  app->add_option("--epochs", o.epochs, "local epochs per round");
  app->add_option("--batch", o.batch, "local batch size");
  app->add_option("--lr", o.lr, "learning rate of prompts and head");
  app->add_option("--encoder-lr", o.encoder_lr, "learning rate of the encoder");
  app->add_option("--V", o.V, "prompt samples at inference");
  app->add_option("--S", o.S, "auxiliary mixing samples");
  app->add_option("--J", o.J, "importance samples");
  app->add_option("--pi", o.pi, "mask keep probability");
  app->add_option("--eval-seeds", o.eval_seeds, "evaluation seeds of the V sweep");
  app->add_flag("--rho-sweep", o.rho_sweep,
                "sweep the encoder learning rate over {1e-4, 5e-4, 1e-3, 5e-3, 1e-2}");
  app->add_option("--cache-dir", o.cache_dir, "directory caching warmed backbones");
}

pfl::ExperimentConfig BuildConfig(const Overrides& o) {
  pfl::ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = pfl::LoadConfig(o.config_path);
  } else if (!o.track.empty()) {
    c = pfl::TrackDefaults(pfl::ParseTrack(o.track));
  }
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const std::string& name : o.methods) c.methods.push_back(pfl::ParseMethod(name));
  }
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.track.empty()) c.track = pfl::ParseTrack(o.track);
  if (o.clients) c.clients = *o.clients;
  if (o.m) c.m = *o.m;
  if (o.s) c.s = *o.s;
  if (o.rounds) c.hyper.rounds = *o.rounds;
  if (o.eval_every) c.hyper.eval_every = *o.eval_every;
  if (o.frac) c.hyper.participation = *o.frac;
  if (o.epochs) c.hyper.local_epochs = *o.epochs;
  if (o.batch) c.hyper.batch_size = *o.batch;
  if (o.lr) c.hyper.lr = *o.lr;
  if (o.encoder_lr) c.hyper.encoder_lr = *o.encoder_lr;
  if (o.V) c.prompt.eval_samples = *o.V;
  if (o.S) c.prompt.aux_samples = *o.S;
  if (o.J) c.prompt.iw_samples = *o.J;
  if (o.pi) c.prompt.keep_prob = *o.pi;
  if (o.eval_seeds) c.eval_seeds = *o.eval_seeds;
  if (o.rho_sweep) c.rho_grid = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
  if (!o.cache_dir.empty()) c.warmup.cache_dir = o.cache_dir;
  c.Validate();
  return c;
}

void PrintSummary(const std::vector<pfl::SummaryRow>& rows) {
  for (const pfl::SummaryRow& r : rows) {
    std::printf("%-28s %-12s %.4f +- %.4f (n=%zu)\n", r.method.c_str(), r.metric.c_str(),
                r.value.mean, r.value.stderr_, r.value.n);
  }
}

int RunGradcheck(const pfl::ExperimentConfig& config) {
  pfl::GradSuiteOptions options;
  options.seed = config.seeds.front();
  const std::vector<pfl::GradSuiteEntry> entries =
      pfl::RunGradSuite(config.Spec(pfl::Method::kBayesPt), options);
  bool ok = true;
  for (const pfl::GradSuiteEntry& e : entries) {
    std::printf("%s %-36s max_rel_error=%.3e tol=%.0e\n", e.passed() ? "ok  " : "FAIL",
                e.name.c_str(), e.report.max_rel_error, e.tolerance);
    ok = ok && e.passed();
  }
  return ok ? 0 : 3;
}

int RunDatagen(const pfl::ExperimentConfig& config) {
  for (uint64_t seed : config.seeds) {
    const pfl::Dataset data = pfl::Generate(config.data, seed);
    const pfl::Partition partition =
        config.track == pfl::Track::kFeatureShift
            ? pfl::FeatureShiftPartition(data, config.clients, config.m, seed)
            : pfl::LabelShiftPartition(data, config.clients, config.s, seed);
    const std::string dir = config.output_dir + "/seed_" + std::to_string(seed);
    pfl::WriteFile(dir, "manifest.csv", pfl::ManifestCsv(data, partition));
    pfl::SaveTensors(dir + "/dataset.pfl", pfl::DatasetTensors(data));
    std::printf("seed %llu: %zu samples -> %s\n", static_cast<unsigned long long>(seed),
                data.samples.size(), dir.c_str());
  }
  return 0;
}

// Runs `body`, mapping library errors to their names and a nonzero exit code.
template <typename Body>
int Guarded(Body&& body) {
  auto fail = [](const char* name, const std::exception& e) {
    std::fprintf(stderr, "%s: %s\n", name, e.what());
    return 2;
  };
  try {
    return body();
  } catch (const pfl::ConfigError& e) {
    return fail("ConfigError", e);
  } catch (const pfl::DimensionError& e) {
    return fail("DimensionError", e);
  } catch (const pfl::DomainError& e) {
    return fail("DomainError", e);
  } catch (const pfl::IndexError& e) {
    return fail("IndexError", e);
  } catch (const pfl::ArgumentError& e) {
    return fail("ArgumentError", e);
  } catch (const pfl::ProtocolError& e) {
    return fail("ProtocolError", e);
  } catch (const pfl::ContractError& e) {
    return fail("ContractError", e);
  } catch (const pfl::NumericError& e) {
    return fail("NumericError", e);
  } catch (const std::exception& e) {
    return fail("Error", e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated semi-implicit Bayesian prompt tuning simulator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Overrides o;
  std::string print_config_path;
  CLI::App* train = app.add_subcommand("train", "train methods x seeds, write rounds/summary CSV");
  CLI::App* generalize = app.add_subcommand("generalize", "train on half the clients, adapt the rest");
  CLI::App* vsweep = app.add_subcommand("vsweep", "accuracy versus the number of prompt samples");
  CLI::App* ablate = app.add_subcommand("ablate", "full method against its -G and -D variants");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  CLI::App* datagen = app.add_subcommand("datagen", "write the synthetic dataset and partition");
  CLI::App* config = app.add_subcommand("config", "print the effective config as JSON");
  for (CLI::App* sub : {train, generalize, vsweep, ablate, gradcheck, datagen, config}) {
    AddCommonFlags(sub, o);
  }
  CLI11_PARSE(app, argc, argv);

  return Guarded([&]() -> int {
    const pfl::ExperimentConfig c = BuildConfig(o);
    if (*config) {
      std::cout << pfl::SerializeConfig(c);
      return 0;
    }
    if (*gradcheck) return RunGradcheck(c);
    if (*datagen) return RunDatagen(c);
    if (*train) {
      PrintSummary(pfl::RunExperiment(c).summary);
    } else if (*generalize) {
      PrintSummary(pfl::RunGeneralization(c).summary);
    } else if (*vsweep) {
      for (const pfl::VSweepRow& r : pfl::RunVSweep(c)) {
        std::printf("%-14s seed=%llu V=%-2d %.4f +- %.4f\n", r.method.c_str(),
                    static_cast<unsigned long long>(r.seed), r.V, r.accuracy.mean,
                    r.accuracy.stderr_);
      }
    } else if (*ablate) {
      const pfl::AblationReport report = pfl::RunAblation(c);
      PrintSummary(report.summary);
      for (const std::string& flag : report.flags) std::printf("# %s\n", flag.c_str());
    }
    std::printf("outputs in %s\n", c.output_dir.c_str());
    return 0;
  });
}
