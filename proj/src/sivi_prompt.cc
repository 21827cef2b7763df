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

#include "pfl/sivi_prompt.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfl/errors.h"
#include "pfl/ops.h"

namespace pfl {
namespace {

std::string EncName(int layer, const std::string& suffix) {
  return "encoder." + std::to_string(layer) + "." + suffix;
}

bool Contains(const std::vector<int>& layers, int layer) {
  return layers.empty() ||
         std::find(layers.begin(), layers.end(), layer) != layers.end();
}

int HiddenWidth(const ViTConfig& vit, const PromptConfig& config) {
  return config.encoder_hidden > 0 ? config.encoder_hidden : vit.token_count();
}

Var TokenMlp(const VarMap& enc, int layer, const std::string& which, Var xt) {
  Var h = Gelu(Linear(xt, Lookup(enc, EncName(layer, which + ".fc1.weight")),
                      Lookup(enc, EncName(layer, which + ".fc1.bias"))));
  return Linear(h, Lookup(enc, EncName(layer, which + ".fc2.weight")),
                Lookup(enc, EncName(layer, which + ".fc2.bias")));
}

}  // namespace

void PromptConfig::Validate(int layers) const {
  auto need = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw ConfigError(std::string(field) + ": " + why);
  };
  need(keep_prob > 0.0 && keep_prob <= 1.0, "keep_prob", "must lie in (0, 1]");
  need(instance_tokens >= 0, "instance_tokens", "must be >= 0");
  need(global_tokens >= 0, "global_tokens", "must be >= 0");
  need(aux_samples >= 0, "aux_samples", "S must be >= 0");
  need(iw_samples >= 1, "iw_samples", "J must be >= 1");
  need(eval_samples >= 1, "eval_samples", "V must be >= 1");
  need(encoder_hidden >= 0, "encoder_hidden", "must be >= 0");
  need(init_sigma > 0.0, "init_sigma", "must be positive");
  for (int l : global_layers) {
    need(l >= 0 && l < layers, "global_layers", "layer index out of range");
  }
  for (int l : instance_layers) {
    need(l >= 0 && l < layers, "instance_layers", "layer index out of range");
  }
}

bool PromptConfig::GlobalAt(int layer) const {
  return global_tokens > 0 && Contains(global_layers, layer);
}

bool PromptConfig::InstanceAt(int layer) const {
  return instance_tokens > 0 && Contains(instance_layers, layer);
}

bool MaskSet::AllOnes() const {
  for (const auto& m : masks) {
    if (std::any_of(m.begin(), m.end(), [](uint8_t v) { return v == 0; })) {
      return false;
    }
  }
  return true;
}

MaskSet SampleMasks(const PromptConfig& config, int layers, int token_count,
                    Rng& rng) {
  if (!(config.keep_prob > 0.0 && config.keep_prob <= 1.0)) {
    throw ConfigError("keep_prob: must lie in (0, 1]");
  }
  MaskSet out;
  out.masks.assign(layers, std::vector<uint8_t>(token_count, 1));
  if (config.keep_prob == 1.0) return out;
  for (auto& m : out.masks) {
    for (int j = 1; j < token_count; ++j) {
      m[j] = rng.Bernoulli(config.keep_prob) ? 1 : 0;
    }
  }
  return out;
}

FeatureStack ApplyMasks(const FeatureStack& features, const MaskSet& masks) {
  if (features.layers.size() != masks.masks.size()) {
    throw DimensionError("ApplyMasks: " + std::to_string(masks.masks.size()) +
                         " masks for " + std::to_string(features.layers.size()) +
                         " layers");
  }
  FeatureStack out = features;
  for (size_t i = 0; i < out.layers.size(); ++i) {
    Tensor& f = out.layers[i];
    const auto& m = masks.masks[i];
    if (f.rank() != 2 || f.dim(0) != m.size()) {
      throw DimensionError("ApplyMasks: mask length " + std::to_string(m.size()) +
                           " for features " + ShapeString(f.shape()));
    }
    const size_t d = f.dim(1);
    for (size_t r = 0; r < m.size(); ++r) {
      if (m[r]) continue;
      std::fill(f.data() + r * d, f.data() + (r + 1) * d, 0.0);
    }
  }
  return out;
}

NamedTensors InitEncoder(const ViTConfig& vit, const PromptConfig& config,
                         uint64_t seed) {
  const size_t d = vit.width, t = vit.token_count();
  const size_t h = HiddenWidth(vit, config);
  const size_t nu = config.instance_tokens;
  Rng rng = Rng::Derive(seed, StreamTag::kInit, {0xe7c});
  auto normal = [&](Shape s, double sd) {
    Tensor x(std::move(s));
    for (double& v : x.values()) v = sd * rng.Normal();
    return x;
  };
  const double log_var0 = 2.0 * std::log(config.init_sigma);
  NamedTensors p;
  for (int i = 0; i < vit.layers; ++i) {
    p[EncName(i, "ln.gain")] = Tensor({d}, 1.0);
    p[EncName(i, "ln.bias")] = Tensor({d}, 0.0);
    for (const char* which : {"mu", "sigma"}) {
      const std::string w(which);
      p[EncName(i, w + ".fc1.weight")] =
          normal({t, h}, 1.0 / std::sqrt(static_cast<double>(t)));
      p[EncName(i, w + ".fc1.bias")] = Tensor({h}, 0.0);
      p[EncName(i, w + ".fc2.weight")] = normal({h, nu}, 0.01);
      p[EncName(i, w + ".fc2.bias")] = Tensor({nu}, w == "sigma" ? log_var0 : 0.0);
    }
  }
  return p;
}

PosteriorVars EncodePsi(const VarMap& enc, std::span<const Var> masked,
                        const ViTConfig& vit, const PromptConfig& config) {
  if (masked.size() != static_cast<size_t>(vit.layers)) {
    throw DimensionError("EncodePsi: " + std::to_string(masked.size()) +
                         " feature layers for " + std::to_string(vit.layers));
  }
  (void)config;
  PosteriorVars out;
  for (int i = 0; i < vit.layers; ++i) {
    Var ln = LayerNorm(masked[i], Lookup(enc, EncName(i, "ln.gain")),
                       Lookup(enc, EncName(i, "ln.bias")), vit.ln_eps);
    Var xt = Transpose(ln);  // [d x (M+1)]
    out.mean.push_back(Transpose(TokenMlp(enc, i, "mu", xt)));
    out.stddev.push_back(Exp(Scale(Transpose(TokenMlp(enc, i, "sigma", xt)), 0.5)));
  }
  return out;
}

PromptPosterior EncodePsi(const NamedTensors& encoder, const FeatureStack& masked,
                          const ViTConfig& vit, const PromptConfig& config) {
  Graph g;
  VarMap enc = BindConstants(g, encoder);
  std::vector<Var> f;
  for (const Tensor& t : masked.layers) f.push_back(g.ConstantRef(t));
  PosteriorVars psi = EncodePsi(enc, f, vit, config);
  std::vector<Tensor> mean, sd;
  for (size_t i = 0; i < psi.mean.size(); ++i) {
    mean.push_back(psi.mean[i].value());
    sd.push_back(psi.stddev[i].value());
  }
  return {Stack(mean), Stack(sd)};
}

PromptDraw SamplePrompt(const PosteriorVars& psi, Rng& rng) {
  std::vector<Tensor> noise;
  for (const Var& m : psi.mean) {
    Tensor eps(m.shape());
    for (double& v : eps.values()) v = rng.Normal();
    noise.push_back(std::move(eps));
  }
  return SamplePrompt(psi, std::move(noise));
}

PromptDraw SamplePrompt(const PosteriorVars& psi, std::vector<Tensor> noise) {
  if (noise.size() != psi.mean.size()) {
    throw DimensionError("SamplePrompt: noise layer count mismatch");
  }
  PromptDraw out;
  for (size_t i = 0; i < psi.mean.size(); ++i) {
    Graph& g = psi.mean[i].graph();
    Var eps = g.Constant(noise[i]);
    out.prompt.push_back(Add(psi.mean[i], Mul(psi.stddev[i], eps)));
  }
  out.noise = std::move(noise);
  return out;
}

PromptSample SamplePrompt(const PromptPosterior& psi, Rng& rng) {
  if (psi.mean.shape() != psi.stddev.shape()) {
    throw DimensionError("SamplePrompt: mean and stddev shapes differ");
  }
  PromptSample out{Tensor(psi.mean.shape()), Tensor(psi.mean.shape())};
  for (size_t i = 0; i < psi.mean.size(); ++i) {
    if (!(psi.stddev[i] > 0.0)) throw DomainError("SamplePrompt: stddev <= 0");
    out.noise[i] = rng.Normal();
    out.prompt[i] = psi.mean[i] + psi.stddev[i] * out.noise[i];
  }
  return out;
}

Tensor ConcatGlobal(const Tensor& global_prompt, const Tensor& instance_prompt) {
  if (global_prompt.rank() != 3 || instance_prompt.rank() != 3 ||
      global_prompt.dim(0) != instance_prompt.dim(0) ||
      global_prompt.dim(2) != instance_prompt.dim(2)) {
    throw DimensionError("ConcatGlobal: global " +
                         ShapeString(global_prompt.shape()) + " vs instance " +
                         ShapeString(instance_prompt.shape()));
  }
  const size_t layers = global_prompt.dim(0);
  std::vector<Tensor> per_layer;
  for (size_t i = 0; i < layers; ++i) {
    const Tensor parts[] = {global_prompt.Index(i), instance_prompt.Index(i)};
    per_layer.push_back(Concat(parts));
  }
  return Stack(per_layer);
}

}  // namespace pfl
