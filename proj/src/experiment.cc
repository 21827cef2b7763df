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


#include "pfl/experiment.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "pfl/checkpoint.h"
#include "pfl/errors.h"
#include "pfl/parallel.h"
#include "pfl/rng.h"

namespace pfl {
namespace {

using Json = nlohmann::ordered_json;

// Reads the fields of one JSON object and rejects keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(Where("") + ": expected an object");
  }

  template <typename T>
  void Get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(Where(key) + ": " + e.what());
    }
  }

  const Json* Child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string Where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  void Finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown field " + Where(it.key()));
    }
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

Json DataJson(const SyntheticSpec& d) {
  return Json{{"num_domains", d.num_domains},
              {"num_classes", d.num_classes},
              {"samples_per_domain_class", d.samples_per_domain_class},
              {"channels", d.channels},
              {"image_h", d.image_h},
              {"image_w", d.image_w},
              {"noise", d.noise},
              {"template_seed", d.template_seed},
              {"style_seed", d.style_seed}};
}

void ReadData(const Json& j, SyntheticSpec& d) {
  FieldReader r(j, "data");
  r.Get("num_domains", d.num_domains);
  r.Get("num_classes", d.num_classes);
  r.Get("samples_per_domain_class", d.samples_per_domain_class);
  r.Get("channels", d.channels);
  r.Get("image_h", d.image_h);
  r.Get("image_w", d.image_w);
  r.Get("noise", d.noise);
  r.Get("template_seed", d.template_seed);
  r.Get("style_seed", d.style_seed);
  r.Finish();
}

Json VitJson(const ViTConfig& v) {
  return Json{{"layers", v.layers},       {"width", v.width},
              {"heads", v.heads},         {"mlp_hidden", v.mlp_hidden},
              {"channels", v.channels},   {"image_h", v.image_h},
              {"image_w", v.image_w},     {"patch_h", v.patch_h},
              {"patch_w", v.patch_w},     {"num_classes", v.num_classes},
              {"ln_eps", v.ln_eps}};
}

void ReadVit(const Json& j, ViTConfig& v) {
  FieldReader r(j, "vit");
  r.Get("layers", v.layers);
  r.Get("width", v.width);
  r.Get("heads", v.heads);
  r.Get("mlp_hidden", v.mlp_hidden);
  r.Get("channels", v.channels);
  r.Get("image_h", v.image_h);
  r.Get("image_w", v.image_w);
  r.Get("patch_h", v.patch_h);
  r.Get("patch_w", v.patch_w);
  r.Get("num_classes", v.num_classes);
  r.Get("ln_eps", v.ln_eps);
  r.Finish();
}

Json PromptJson(const PromptConfig& p) {
  return Json{{"instance_tokens", p.instance_tokens},
              {"global_tokens", p.global_tokens},
              {"keep_prob", p.keep_prob},
              {"global_layers", p.global_layers},
              {"instance_layers", p.instance_layers},
              {"aux_samples", p.aux_samples},
              {"iw_samples", p.iw_samples},
              {"eval_samples", p.eval_samples},
              {"encoder_hidden", p.encoder_hidden},
              {"init_sigma", p.init_sigma}};
}

void ReadPrompt(const Json& j, PromptConfig& p) {
  FieldReader r(j, "prompt");
  r.Get("instance_tokens", p.instance_tokens);
  r.Get("global_tokens", p.global_tokens);
  r.Get("keep_prob", p.keep_prob);
  r.Get("global_layers", p.global_layers);
  r.Get("instance_layers", p.instance_layers);
  r.Get("aux_samples", p.aux_samples);
  r.Get("iw_samples", p.iw_samples);
  r.Get("eval_samples", p.eval_samples);
  r.Get("encoder_hidden", p.encoder_hidden);
  r.Get("init_sigma", p.init_sigma);
  r.Finish();
}

Json HyperJson(const Hyperparams& h) {
  return Json{{"rounds", h.rounds},
              {"local_epochs", h.local_epochs},
              {"batch_size", h.batch_size},
              {"lr", h.lr},
              {"encoder_lr", h.encoder_lr},
              {"participation", h.participation},
              {"weighting", h.weighting == Weighting::kDataSize ? "data-size" : "uniform"},
              {"eval_every", h.eval_every}};
}

void ReadHyper(const Json& j, Hyperparams& h) {
  FieldReader r(j, "hyper");
  r.Get("rounds", h.rounds);
  r.Get("local_epochs", h.local_epochs);
  r.Get("batch_size", h.batch_size);
  r.Get("lr", h.lr);
  r.Get("encoder_lr", h.encoder_lr);
  r.Get("participation", h.participation);
  std::string weighting = h.weighting == Weighting::kDataSize ? "data-size" : "uniform";
  r.Get("weighting", weighting);
  if (weighting == "data-size") {
    h.weighting = Weighting::kDataSize;
  } else if (weighting == "uniform") {
    h.weighting = Weighting::kUniform;
  } else {
    throw ConfigError("hyper.weighting: expected data-size or uniform, got " + weighting);
  }
  r.Get("eval_every", h.eval_every);
  r.Finish();
}

Json WarmupJson(const WarmupConfig& w) {
  return Json{{"enabled", w.enabled},
              {"epochs", w.epochs},
              {"domains", w.domains},
              {"samples_per_domain_class", w.samples_per_domain_class},
              {"template_seed", w.template_seed},
              {"style_seed", w.style_seed},
              {"data_seed", w.data_seed},
              {"backbone_seed", w.backbone_seed},
              {"batch_size", w.batch_size},
              {"lr", w.lr},
              {"cache_dir", w.cache_dir}};
}

void ReadWarmup(const Json& j, WarmupConfig& w) {
  FieldReader r(j, "warmup");
  r.Get("enabled", w.enabled);
  r.Get("epochs", w.epochs);
  r.Get("domains", w.domains);
  r.Get("samples_per_domain_class", w.samples_per_domain_class);
  r.Get("template_seed", w.template_seed);
  r.Get("style_seed", w.style_seed);
  r.Get("data_seed", w.data_seed);
  r.Get("backbone_seed", w.backbone_seed);
  r.Get("batch_size", w.batch_size);
  r.Get("lr", w.lr);
  r.Get("cache_dir", w.cache_dir);
  r.Finish();
}

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string RunId(Method method, uint64_t seed, const std::vector<double>& grid,
                  double rho) {
  std::string id = MethodName(method) + "_s" + std::to_string(seed);
  if (!grid.empty()) id += "_rho" + Num(rho);
  return id;
}

std::string SummaryCsv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "method,metric,mean,stderr,n_seeds\n";
  for (const SummaryRow& r : rows) {
    os << r.method << "," << r.metric << "," << Num(r.value.mean) << ","
       << Num(r.value.stderr_) << "," << r.value.n << "\n";
  }
  return os.str();
}

std::vector<double> RhoValues(const ExperimentConfig& config) {
  if (config.rho_grid.empty()) return {config.hyper.encoder_lr};
  return config.rho_grid;
}

}  // namespace

std::string TrackName(Track track) {
  return track == Track::kFeatureShift ? "feature-shift" : "label-shift";
}

Track ParseTrack(const std::string& name) {
  if (name == "feature-shift") return Track::kFeatureShift;
  if (name == "label-shift") return Track::kLabelShift;
  throw ConfigError("track: expected feature-shift or label-shift, got " + name);
}

void ExperimentConfig::Validate() const {
  auto need = [](bool ok, const std::string& field, const std::string& why) {
    if (!ok) throw ConfigError(field + ": " + why);
  };
  data.Validate();
  vit.Validate();
  prompt.Validate(vit.layers);
  hyper.Validate();
  need(!methods.empty(), "methods", "at least one method required");
  need(!seeds.empty(), "seeds", "at least one seed required");
  need(clients >= 1, "clients", "must be >= 1");
  need(vpt_tokens >= 0, "vpt_tokens", "must be >= 0");
  need(data.channels == vit.channels && data.image_h == vit.image_h &&
           data.image_w == vit.image_w,
       "data", "image extents must match vit");
  need(data.num_classes == vit.num_classes, "data.num_classes",
       "must equal vit.num_classes");
  if (track == Track::kFeatureShift) {
    need(clients == data.num_domains, "clients",
         "feature-shift track needs one client per domain");
    need(m >= 1 && m <= data.num_domains, "m", "must lie in [1, num_domains]");
  } else {
    need(s >= 1 && s <= data.num_classes, "s", "must lie in [1, num_classes]");
  }
  need(std::lround(hyper.participation * clients) >= 1, "hyper.participation",
       "selects no client");
  for (double rho : rho_grid) need(rho >= 0.0, "rho_grid", "entries must be >= 0");
  need(summary_rounds >= 1, "summary_rounds", "must be >= 1");
  need(adapt_epochs >= 0, "adapt_epochs", "must be >= 0");
  need(!v_values.empty(), "v_values", "at least one V required");
  for (int v : v_values) need(v >= 1, "v_values", "entries must be >= 1");
  need(eval_seeds >= 1, "eval_seeds", "must be >= 1");
  need(warmup.epochs >= 0, "warmup.epochs", "must be >= 0");
  need(warmup.domains >= 1, "warmup.domains", "must be >= 1");
  need(warmup.samples_per_domain_class >= 1, "warmup.samples_per_domain_class",
       "must be >= 1");
  need(warmup.batch_size >= 1, "warmup.batch_size", "must be >= 1");
  need(warmup.lr > 0.0, "warmup.lr", "must be > 0");
}

ExperimentConfig TrackDefaults(Track track) {
  ExperimentConfig c;
  c.track = track;
  if (track == Track::kLabelShift) {
    c.data.num_domains = 1;
    c.data.samples_per_domain_class = 200;
    c.clients = 20;
    c.s = 2;
    c.hyper.participation = 0.25;
  }
  return c;
}

ModelSpec ExperimentConfig::Spec(Method method) const {
  ModelSpec spec;
  spec.vit = vit;
  spec.prompt = prompt;
  spec.method = method;
  spec.vpt_tokens = vpt_tokens;
  return spec;
}

Json ToJson(const ExperimentConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.push_back(MethodName(m));
  return Json{{"methods", methods},
              {"seeds", c.seeds},
              {"track", TrackName(c.track)},
              {"clients", c.clients},
              {"m", c.m},
              {"s", c.s},
              {"data", DataJson(c.data)},
              {"vit", VitJson(c.vit)},
              {"prompt", PromptJson(c.prompt)},
              {"vpt_tokens", c.vpt_tokens},
              {"hyper", HyperJson(c.hyper)},
              {"warmup", WarmupJson(c.warmup)},
              {"rho_grid", c.rho_grid},
              {"summary_rounds", c.summary_rounds},
              {"adapt_epochs", c.adapt_epochs},
              {"v_values", c.v_values},
              {"eval_seeds", c.eval_seeds},
              {"output_dir", c.output_dir},
              {"save_checkpoints", c.save_checkpoints}};
}

ExperimentConfig ConfigFromJson(const Json& json) {
  ExperimentConfig c;
  FieldReader r(json, "");
  std::vector<std::string> methods;
  r.Get("methods", methods);
  if (!methods.empty()) {
    c.methods.clear();
    for (const std::string& m : methods) c.methods.push_back(ParseMethod(m));
  }
  r.Get("seeds", c.seeds);
  std::string track = TrackName(c.track);
  r.Get("track", track);
  c.track = ParseTrack(track);
  r.Get("clients", c.clients);
  r.Get("m", c.m);
  r.Get("s", c.s);
  if (const Json* j = r.Child("data")) ReadData(*j, c.data);
  if (const Json* j = r.Child("vit")) ReadVit(*j, c.vit);
  if (const Json* j = r.Child("prompt")) ReadPrompt(*j, c.prompt);
  r.Get("vpt_tokens", c.vpt_tokens);
  if (const Json* j = r.Child("hyper")) ReadHyper(*j, c.hyper);
  if (const Json* j = r.Child("warmup")) ReadWarmup(*j, c.warmup);
  r.Get("rho_grid", c.rho_grid);
  r.Get("summary_rounds", c.summary_rounds);
  r.Get("adapt_epochs", c.adapt_epochs);
  r.Get("v_values", c.v_values);
  r.Get("eval_seeds", c.eval_seeds);
  r.Get("output_dir", c.output_dir);
  r.Get("save_checkpoints", c.save_checkpoints);
  r.Finish();
  return c;
}

std::string SerializeConfig(const ExperimentConfig& config) {
  return ToJson(config).dump(2) + "\n";
}

ExperimentConfig ParseConfig(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return ConfigFromJson(j);
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseConfig(buf.str());
}

void WriteFile(const std::string& dir, const std::string& name,
               const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + name, std::ios::binary);
  if (!out) throw ConfigError("output: cannot write " + dir + "/" + name);
  out << text;
}

Backbone PrepareBackbone(const ExperimentConfig& config) {
  const WarmupConfig& w = config.warmup;
  Backbone init = Backbone::Random(config.vit, w.backbone_seed);
  if (!w.enabled || w.epochs == 0) return init;
  std::string cache;
  if (!w.cache_dir.empty()) {
    Json key = {{"vit", VitJson(config.vit)}, {"data", DataJson(config.data)},
                {"warmup", WarmupJson(w)}};
    key["warmup"].erase("cache_dir");
    const std::string text = key.dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) h = (h ^ ch) * 1099511628211ull;
    std::ostringstream name;
    name << w.cache_dir << "/backbone_" << std::hex << h << ".pfl";
    cache = name.str();
    if (std::filesystem::exists(cache)) return Backbone(config.vit, LoadTensors(cache));
  }
  SyntheticSpec spec = config.data;
  spec.num_domains = w.domains;
  spec.samples_per_domain_class = w.samples_per_domain_class;
  spec.template_seed = w.template_seed;
  spec.style_seed = w.style_seed;
  const Dataset data = Generate(spec, w.data_seed);
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (const Sample& s : data.samples) {
    images.push_back(s.image);
    labels.push_back(s.label);
  }
  WarmupOptions options;
  options.epochs = w.epochs;
  options.batch_size = w.batch_size;
  options.lr = w.lr;
  options.seed = w.backbone_seed;
  Backbone warmed = Warmup(init, images, labels, options);
  if (!cache.empty()) {
    std::filesystem::create_directories(w.cache_dir);
    SaveTensors(cache, warmed.params());
  }
  return warmed;
}

RunSetup PrepareRun(const ExperimentConfig& config, const Backbone& backbone,
                    uint64_t seed) {
  RunSetup setup;
  setup.data = Generate(config.data, seed);
  setup.partition = config.track == Track::kFeatureShift
                        ? FeatureShiftPartition(setup.data, config.clients, config.m, seed)
                        : LabelShiftPartition(setup.data, config.clients, config.s, seed);
  setup.pool = MakeInstances(backbone, setup.data, MaxWorkers());
  return setup;
}

RunOutcome TrainRun(const ExperimentConfig& config, const Backbone& backbone,
                    const RunSetup& setup, Method method, uint64_t seed,
                    double encoder_lr, const RoundCallback& on_round) {
  RunOutcome out;
  out.method = method;
  out.seed = seed;
  out.encoder_lr = encoder_lr;
  out.run_id = RunId(method, seed, config.rho_grid, encoder_lr);
  const ModelSpec spec = config.Spec(method);
  const NamedTensors global = InitGlobalParams(spec, seed);
  out.clients = MakeClients(spec, setup.pool, setup.partition, global, seed);
  Hyperparams hyper = config.hyper;
  hyper.encoder_lr = encoder_lr;
  TrainingOptions options;
  options.seed = seed;
  options.workers = MaxWorkers();
  options.on_round = on_round;
  out.training = RunTraining(backbone, spec, out.clients, hyper, options);
  return out;
}

MeanStderr MeanAndStderr(const std::vector<double>& values) {
  MeanStderr r;
  r.n = values.size();
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(r.n - 1) / static_cast<double>(r.n));
  }
  return r;
}

double PooledStderr(const MeanStderr& a, const MeanStderr& b) {
  return std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
}

std::pair<double, double> TrailingMeans(const TrainingResult& result,
                                        int total_rounds, int rounds) {
  double avg = 0.0, worst = 0.0;
  size_t n = 0;
  for (const RoundMetrics& m : result.history) {
    if (m.round > total_rounds - rounds) {
      avg += m.eval.average;
      worst += m.eval.worst_local;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("summary: no evaluated round among the final rounds");
  return {avg / n, worst / n};
}

ExperimentReport RunExperiment(const ExperimentConfig& config) {
  config.Validate();
  const Backbone backbone = PrepareBackbone(config);
  if (config.save_checkpoints) std::filesystem::create_directories(config.output_dir);
  ExperimentReport report;
  std::ostringstream rounds;
  rounds << "run_id,method,seed,round,avg_acc,worst_acc";
  for (int k = 0; k < config.clients; ++k) rounds << ",client_" << k;
  rounds << "\n";
  // label -> per-seed trailing (average, worst)
  std::vector<std::string> labels;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> trailing;
  for (uint64_t seed : config.seeds) {
    const RunSetup setup = PrepareRun(config, backbone, seed);
    for (Method method : config.methods) {
      const bool has_encoder = TraitsOf(method).encoder;
      for (double rho : RhoValues(config)) {
        if (!has_encoder && rho != RhoValues(config).front()) continue;
        RunOutcome run = TrainRun(config, backbone, setup, method, seed, rho);
        for (const RoundMetrics& m : run.training.history) {
          rounds << run.run_id << "," << MethodName(method) << "," << seed << ","
                 << m.round << "," << Num(m.eval.average) << ","
                 << Num(m.eval.worst_local);
          for (double a : m.eval.per_client) rounds << "," << Num(a);
          rounds << "\n";
        }
        std::string label = MethodName(method);
        if (!config.rho_grid.empty() && has_encoder) label += "@rho=" + Num(rho);
        if (!trailing.count(label)) labels.push_back(label);
        if (config.hyper.rounds > 0 && config.hyper.eval_every > 0) {
          auto [avg, worst] =
              TrailingMeans(run.training, config.hyper.rounds, config.summary_rounds);
          trailing[label].first.push_back(avg);
          trailing[label].second.push_back(worst);
        } else {
          trailing[label];
        }
        if (config.save_checkpoints) {
          SaveTensors(config.output_dir + "/" + run.run_id + ".pfl",
                      RoundCheckpoint(run.training.global, run.clients,
                                      config.hyper.rounds));
        }
        run.clients.clear();  // instance caches are large
        report.runs.push_back(std::move(run));
      }
    }
  }
  for (const std::string& label : labels) {
    report.summary.push_back({label, "average", MeanAndStderr(trailing[label].first)});
    report.summary.push_back({label, "worst_local", MeanAndStderr(trailing[label].second)});
  }
  WriteFile(config.output_dir, "config.json", SerializeConfig(config));
  WriteFile(config.output_dir, "rounds.csv", rounds.str());
  WriteFile(config.output_dir, "summary.csv", SummaryCsv(report.summary));
  return report;
}

GeneralizationReport RunGeneralization(const ExperimentConfig& config) {
  config.Validate();
  if (config.clients % 2 != 0) {
    throw ConfigError("clients: generalization needs an even client count");
  }
  const Backbone backbone = PrepareBackbone(config);
  GeneralizationReport report;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_method;
  std::vector<std::string> order;
  const int half = config.clients / 2;
  for (uint64_t seed : config.seeds) {
    const RunSetup setup = PrepareRun(config, backbone, seed);
    for (Method method : config.methods) {
      const ModelSpec spec = config.Spec(method);
      std::vector<ClientState> all = MakeClients(
          spec, setup.pool, setup.partition, InitGlobalParams(spec, seed), seed);
      std::vector<ClientState> seen(std::make_move_iterator(all.begin()),
                                    std::make_move_iterator(all.begin() + half));
      std::vector<ClientState> unseen(std::make_move_iterator(all.begin() + half),
                                      std::make_move_iterator(all.end()));
      TrainingOptions options;
      options.seed = seed;
      options.workers = MaxWorkers();
      Hyperparams hyper = config.hyper;
      hyper.eval_every = 0;
      const TrainingResult trained = RunTraining(backbone, spec, seen, hyper, options);
      const std::string name = MethodName(method);
      if (!per_method.count(name)) order.push_back(name);
      std::vector<double> zero(unseen.size()), adapted(unseen.size());
      const uint64_t eval_seed =
          Rng::Derive(seed, StreamTag::kEval, {0x9e4e7a11}).NextU64();
      ParallelFor(unseen.size(), MaxWorkers(), [&](size_t i) {
        ClientState fresh = unseen[i];
        fresh.global = trained.global;
        zero[i] = EvaluateClients(backbone, spec, std::span(&fresh, 1), eval_seed).average;
        ClientState tuned = AdaptNewClient(backbone, spec, trained.global, unseen[i],
                                           config.adapt_epochs, config.hyper, seed);
        adapted[i] = EvaluateClients(backbone, spec, std::span(&tuned, 1), eval_seed).average;
      });
      for (size_t i = 0; i < unseen.size(); ++i) {
        report.rows.push_back({name, seed, unseen[i].id, zero[i], adapted[i]});
      }
      double z = 0.0, a = 0.0;
      for (size_t i = 0; i < unseen.size(); ++i) {
        z += zero[i];
        a += adapted[i];
      }
      per_method[name].first.push_back(z / unseen.size());
      per_method[name].second.push_back(a / unseen.size());
    }
  }
  for (const std::string& name : order) {
    report.summary.push_back({name, "zero_shot", MeanAndStderr(per_method[name].first)});
    report.summary.push_back({name, "adapted", MeanAndStderr(per_method[name].second)});
  }
  std::ostringstream csv;
  csv << "method,seed,client,zero_shot_acc,adapted_acc\n";
  for (const GeneralizationRow& r : report.rows) {
    csv << r.method << "," << r.seed << "," << r.client << "," << Num(r.zero_shot)
        << "," << Num(r.adapted) << "\n";
  }
  WriteFile(config.output_dir, "generalization.csv", csv.str());
  WriteFile(config.output_dir, "generalization_summary.csv", SummaryCsv(report.summary));
  return report;
}

std::vector<uint64_t> SweepEvalSeeds(uint64_t seed, int count) {
  std::vector<uint64_t> seeds;
  for (int e = 0; e < count; ++e) {
    seeds.push_back(
        Rng::Derive(seed, StreamTag::kEval, {0x5eed, static_cast<uint64_t>(e)}).NextU64());
  }
  return seeds;
}

std::vector<std::vector<double>> VSweepAccuracies(
    const Backbone& backbone, const ModelSpec& spec,
    std::span<const ClientState> clients, std::span<const int> v_values,
    std::span<const uint64_t> eval_seeds) {
  if (v_values.empty()) throw ConfigError("v_values: at least one V required");
  const int v_max = *std::max_element(v_values.begin(), v_values.end());
  if (v_max < 1) throw ConfigError("v_values: entries must be >= 1");
  std::vector<NamedTensors> params;
  for (const ClientState& c : clients) params.push_back(c.Params());
  // correct[e][k][v]
  std::vector<std::vector<std::vector<size_t>>> correct(
      eval_seeds.size(),
      std::vector<std::vector<size_t>>(clients.size(),
                                       std::vector<size_t>(v_values.size(), 0)));
  ParallelFor(eval_seeds.size(), MaxWorkers(), [&](size_t e) {
    for (size_t k = 0; k < clients.size(); ++k) {
      const ClientState& c = clients[k];
      if (c.test.empty()) {
        throw ConfigError("test split of client " + std::to_string(k) + " is empty");
      }
      for (size_t i = 0; i < c.test.size(); ++i) {
        Rng rng = Rng::Derive(eval_seeds[e], StreamTag::kEval, {k, i});
        const PredictionResult full =
            Predict(backbone, spec, params[k], c.test[i], v_max, rng);
        for (size_t vi = 0; vi < v_values.size(); ++vi) {
          const int V = v_values[vi];
          std::vector<double> avg(full.per_sample[0].size(), 0.0);
          for (int v = 0; v < V; ++v) {
            for (size_t j = 0; j < avg.size(); ++j) avg[j] += full.per_sample[v][j];
          }
          for (double& p : avg) p /= static_cast<double>(V);
          if (ArgMax(avg) == c.test[i].label) ++correct[e][k][vi];
        }
      }
    }
  });
  std::vector<std::vector<double>> out(v_values.size(),
                                       std::vector<double>(eval_seeds.size()));
  for (size_t vi = 0; vi < v_values.size(); ++vi) {
    for (size_t e = 0; e < eval_seeds.size(); ++e) {
      double sum = 0.0;
      for (size_t k = 0; k < clients.size(); ++k) {
        sum += static_cast<double>(correct[e][k][vi]) /
               static_cast<double>(clients[k].test.size());
      }
      out[vi][e] = sum / static_cast<double>(clients.size());
    }
  }
  return out;
}

std::vector<VSweepRow> RunVSweep(const ExperimentConfig& config) {
  config.Validate();
  const Backbone backbone = PrepareBackbone(config);
  std::vector<VSweepRow> rows;
  for (uint64_t seed : config.seeds) {
    const RunSetup setup = PrepareRun(config, backbone, seed);
    for (Method method : config.methods) {
      ExperimentConfig quiet = config;
      quiet.hyper.eval_every = 0;
      RunOutcome run =
          TrainRun(quiet, backbone, setup, method, seed, config.hyper.encoder_lr);
      const auto acc = VSweepAccuracies(backbone, config.Spec(method), run.clients,
                                        config.v_values,
                                        SweepEvalSeeds(seed, config.eval_seeds));
      for (size_t vi = 0; vi < config.v_values.size(); ++vi) {
        rows.push_back({MethodName(method), seed, config.v_values[vi], MeanAndStderr(acc[vi])});
      }
    }
  }
  std::ostringstream csv;
  csv << "method,seed,V,mean_acc,stderr,n_eval_seeds\n";
  for (const VSweepRow& r : rows) {
    csv << r.method << "," << r.seed << "," << r.V << "," << Num(r.accuracy.mean) << ","
        << Num(r.accuracy.stderr_) << "," << r.accuracy.n << "\n";
  }
  WriteFile(config.output_dir, "vsweep.csv", csv.str());
  return rows;
}

AblationReport RunAblation(const ExperimentConfig& config) {
  const std::vector<Method> variants = {Method::kBayesPt, Method::kBayesPtGaussian,
                                        Method::kBayesPtDeterministic};
  ExperimentConfig c = config;
  c.methods = variants;
  c.Validate();
  if (c.hyper.rounds < 1 || c.hyper.eval_every < 1) {
    throw ConfigError("hyper: ablation needs rounds >= 1 and eval_every >= 1");
  }
  const Backbone backbone = PrepareBackbone(c);
  AblationReport report;
  report.per_seed.assign(variants.size(), {});
  std::vector<std::vector<double>> worst(variants.size());
  for (uint64_t seed : c.seeds) {
    const RunSetup setup = PrepareRun(c, backbone, seed);
    for (size_t v = 0; v < variants.size(); ++v) {
      RunOutcome run =
          TrainRun(c, backbone, setup, variants[v], seed, c.hyper.encoder_lr);
      auto [avg, w] = TrailingMeans(run.training, c.hyper.rounds, c.summary_rounds);
      report.per_seed[v].push_back(avg);
      worst[v].push_back(w);
    }
  }
  std::vector<MeanStderr> means;
  for (size_t v = 0; v < variants.size(); ++v) {
    means.push_back(MeanAndStderr(report.per_seed[v]));
    report.summary.push_back({MethodName(variants[v]), "average", means.back()});
    report.summary.push_back({MethodName(variants[v]), "worst_local", MeanAndStderr(worst[v])});
  }
  for (size_t v = 0; v + 1 < variants.size(); ++v) {
    const double margin = PooledStderr(means[v], means[v + 1]);
    if (means[v].mean < means[v + 1].mean - margin) {
      report.flags.push_back("inverted: " + MethodName(variants[v]) + " < " +
                             MethodName(variants[v + 1]) + " beyond one pooled stderr");
    }
  }
  std::ostringstream csv;
  csv << "seed";
  for (Method m : variants) csv << "," << MethodName(m);
  csv << "\n";
  for (size_t i = 0; i < c.seeds.size(); ++i) {
    csv << c.seeds[i];
    for (size_t v = 0; v < variants.size(); ++v) csv << "," << Num(report.per_seed[v][i]);
    csv << "\n";
  }
  std::string summary = SummaryCsv(report.summary);
  for (const std::string& f : report.flags) summary += "# " + f + "\n";
  WriteFile(c.output_dir, "ablation.csv", csv.str());
  WriteFile(c.output_dir, "ablation_summary.csv", summary);
  return report;
}

}  // namespace pfl
