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

#ifndef PFL_VIT_H_
#define PFL_VIT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfl/autograd.h"
#include "pfl/checkpoint.h"
#include "pfl/ops.h"
#include "pfl/params.h"
#include "pfl/tensor.h"

namespace pfl {

struct ViTConfig {
  int layers = 4;
  int width = 32;  // d
  int heads = 4;
  int mlp_hidden = 128;
  int channels = 3;
  int image_h = 16;
  int image_w = 16;
  int patch_h = 4;
  int patch_w = 4;
  int num_classes = 10;
  double ln_eps = kLayerNormEps;

  int patch_count() const { return (image_h / patch_h) * (image_w / patch_w); }
  int token_count() const { return patch_count() + 1; }
  int patch_dim() const { return channels * patch_h * patch_w; }
  // Throws ConfigError naming the first bad field.
  void Validate() const;
};

// Inputs of every transformer layer from the unprompted pass: layers[i] is
// the [(M+1) x d] token matrix entering layer i, CLS at row 0.
struct FeatureStack {
  std::vector<Tensor> layers;
};

// Frozen ViT weights. Parameter names:
//   embed.proj.weight [patch_dim x d], embed.proj.bias [d], embed.cls [1 x d],
//   embed.pos [M x d], block<i>.{ln1,ln2}.{gain,bias},
//   block<i>.attn.{qkv,proj}.{weight,bias}, block<i>.mlp.{fc1,fc2}.{weight,bias},
//   norm.{gain,bias}.
class Backbone {
 public:
  Backbone(ViTConfig config, NamedTensors params);

  static Backbone Random(const ViTConfig& config, uint64_t seed);

  const ViTConfig& config() const { return config_; }
  const NamedTensors& params() const { return params_; }
  uint64_t Hash() const { return HashTensors(params_); }

  VarMap BindFrozen(Graph& g) const { return BindConstants(g, params_); }

 private:
  ViTConfig config_;
  NamedTensors params_;
};

// Expected parameter shapes for `config`.
NamedTensors BackboneShapes(const ViTConfig& config);

// Classification head d -> C: head.weight [d x C], head.bias [C].
NamedTensors InitHead(const ViTConfig& config, uint64_t seed, double stddev = 0.02);

// --- graph-level pieces -----------------------------------------------------

// [(M+1) x d]: CLS embedding, then patch projections plus positions.
Var PatchEmbed(const VarMap& bb, const ViTConfig& config, const Tensor& image);
// Pre-norm block: x + Attn(LN(x)), then + MLP(LN(.)) with GELU.
Var TransformerBlock(const VarMap& bb, const ViTConfig& config, int layer, Var x);
// Final LayerNorm applied to the CLS row of the last layer output, [1 x d].
Var ClsFeature(const VarMap& bb, const ViTConfig& config, Var tokens);

// Runs all layers from the embedded input `first_layer_input` (f_1).
// `layer_prompts[i]`, when valid, is a fresh [K_i x d] block inserted between
// CLS and patch tokens at the input of layer i; the prompt outputs of the
// previous layer are dropped there. An invalid Var passes the previous prompt
// outputs through unchanged. Returns logits [1 x C] = head(c_L).
Var PromptedForward(const VarMap& bb, const ViTConfig& config,
                    Var first_layer_input, std::span<const Var> layer_prompts,
                    Var head_weight, Var head_bias);

// --- value-level API --------------------------------------------------------

Tensor PatchEmbed(const Backbone& backbone, const Tensor& image);

struct CleanPass {
  FeatureStack features;
  Tensor cls;     // [1 x d], input of the head
  Tensor logits;  // [1 x C]; empty when no head was given
};

CleanPass CleanForward(const Backbone& backbone, const Tensor& image,
                       const NamedTensors* head = nullptr);

enum class DepthMode { kShallow, kDeep };

// Value-level prompted pass. `prompts` is [L x K x d] for deep mode (one
// block per layer) or [K x d] / [1 x K x d] for shallow mode.
Tensor PromptedForward(const Backbone& backbone, const Tensor& image,
                       const Tensor& prompts, const NamedTensors& head,
                       DepthMode mode);

// Per-layer prompt blocks from a [L x K x d] tensor according to `mode`.
std::vector<Var> ArrangePrompts(Graph& g, const Tensor& prompts, DepthMode mode,
                                int layers);

struct WarmupOptions {
  int epochs = 3;
  int batch_size = 16;
  double lr = 0.05;
  uint64_t seed = 0;
};

// Centralised supervised pre-training of every backbone weight plus a
// throwaway head on pooled data, standing in for a pretrained checkpoint.
Backbone Warmup(const Backbone& init, std::span<const Tensor> images,
                std::span<const int> labels, const WarmupOptions& options);

}  // namespace pfl

#endif  // PFL_VIT_H_
