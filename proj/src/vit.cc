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

#include "pfl/vit.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/errors.h"
#include "pfl/rng.h"

namespace pfl {
namespace {

std::string BlockName(int layer, const char* suffix) {
  return "block" + std::to_string(layer) + "." + suffix;
}

Tensor RandomNormal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.Normal();
  return t;
}

// Flattens image patches into rows of a [M x patch_dim] matrix.
Tensor Patchify(const ViTConfig& c, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != static_cast<size_t>(c.channels) ||
      image.dim(1) != static_cast<size_t>(c.image_h) ||
      image.dim(2) != static_cast<size_t>(c.image_w)) {
    throw DimensionError("image of shape " + ShapeString(image.shape()) +
                         " does not match config [" +
                         std::to_string(c.channels) + "x" +
                         std::to_string(c.image_h) + "x" +
                         std::to_string(c.image_w) + "]");
  }
  const int gw = c.image_w / c.patch_w;
  Tensor out({static_cast<size_t>(c.patch_count()),
              static_cast<size_t>(c.patch_dim())});
  for (int p = 0; p < c.patch_count(); ++p) {
    const int r0 = (p / gw) * c.patch_h, c0 = (p % gw) * c.patch_w;
    size_t k = 0;
    for (int ch = 0; ch < c.channels; ++ch) {
      for (int y = 0; y < c.patch_h; ++y) {
        for (int x = 0; x < c.patch_w; ++x) {
          out.at(p, k++) = image[(static_cast<size_t>(ch) * c.image_h + r0 + y) *
                                     c.image_w +
                                 c0 + x];
        }
      }
    }
  }
  return out;
}

}  // namespace

void ViTConfig::Validate() const {
  auto need = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw ConfigError(std::string(field) + ": " + why);
  };
  need(layers >= 1, "layers", "must be >= 1");
  need(width >= 1, "width", "must be >= 1");
  need(heads >= 1 && width % heads == 0, "heads", "must divide width");
  need(mlp_hidden >= 1, "mlp_hidden", "must be >= 1");
  need(channels >= 1, "channels", "must be >= 1");
  need(num_classes >= 2, "num_classes", "must be >= 2");
  need(patch_h >= 1 && patch_w >= 1, "patch", "extents must be >= 1");
  need(image_h % patch_h == 0, "image_h", "not divisible by patch_h");
  need(image_w % patch_w == 0, "image_w", "not divisible by patch_w");
  need(image_h >= 1 && image_w >= 1, "image", "extents must be >= 1");
  need(ln_eps > 0.0, "ln_eps", "must be positive");
}

NamedTensors BackboneShapes(const ViTConfig& c) {
  const size_t d = c.width, h = c.mlp_hidden;
  NamedTensors s;
  s["embed.proj.weight"] = Tensor({static_cast<size_t>(c.patch_dim()), d});
  s["embed.proj.bias"] = Tensor({d});
  s["embed.cls"] = Tensor({1, d});
  s["embed.pos"] = Tensor({static_cast<size_t>(c.patch_count()), d});
  for (int i = 0; i < c.layers; ++i) {
    s[BlockName(i, "ln1.gain")] = Tensor({d}, 1.0);
    s[BlockName(i, "ln1.bias")] = Tensor({d});
    s[BlockName(i, "attn.qkv.weight")] = Tensor({d, 3 * d});
    s[BlockName(i, "attn.qkv.bias")] = Tensor({3 * d});
    s[BlockName(i, "attn.proj.weight")] = Tensor({d, d});
    s[BlockName(i, "attn.proj.bias")] = Tensor({d});
    s[BlockName(i, "ln2.gain")] = Tensor({d}, 1.0);
    s[BlockName(i, "ln2.bias")] = Tensor({d});
    s[BlockName(i, "mlp.fc1.weight")] = Tensor({d, h});
    s[BlockName(i, "mlp.fc1.bias")] = Tensor({h});
    s[BlockName(i, "mlp.fc2.weight")] = Tensor({h, d});
    s[BlockName(i, "mlp.fc2.bias")] = Tensor({d});
  }
  s["norm.gain"] = Tensor({d}, 1.0);
  s["norm.bias"] = Tensor({d});
  return s;
}

Backbone::Backbone(ViTConfig config, NamedTensors params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.Validate();
  if (!SameStructure(params_, BackboneShapes(config_))) {
    throw DimensionError("backbone parameters do not match the configuration");
  }
}

Backbone Backbone::Random(const ViTConfig& config, uint64_t seed) {
  config.Validate();
  NamedTensors p = BackboneShapes(config);
  Rng rng = Rng::Derive(seed, StreamTag::kInit, {0xb0});
  for (auto& [name, t] : p) {
    if (name.ends_with(".gain") || name.ends_with(".bias")) continue;
    if (name == "embed.cls" || name == "embed.pos") {
      t = RandomNormal(t.shape(), 0.02, rng);
    } else {
      t = RandomNormal(t.shape(), 1.0 / std::sqrt(static_cast<double>(t.dim(0))),
                       rng);
    }
  }
  return Backbone(config, std::move(p));
}

NamedTensors InitHead(const ViTConfig& c, uint64_t seed, double stddev) {
  Rng rng = Rng::Derive(seed, StreamTag::kInit, {0x4ead});
  NamedTensors h;
  h["head.weight"] = RandomNormal({static_cast<size_t>(c.width),
                                   static_cast<size_t>(c.num_classes)},
                                  stddev, rng);
  h["head.bias"] = Tensor({static_cast<size_t>(c.num_classes)});
  return h;
}

Var PatchEmbed(const VarMap& bb, const ViTConfig& config, const Tensor& image) {
  Graph& g = Lookup(bb, "embed.cls").graph();
  Var patches = g.Constant(Patchify(config, image));
  Var proj = Linear(patches, Lookup(bb, "embed.proj.weight"),
                    Lookup(bb, "embed.proj.bias"));
  Var tokens = Add(proj, Lookup(bb, "embed.pos"));
  const Var parts[] = {Lookup(bb, "embed.cls"), tokens};
  return ConcatRows(parts);
}

Var TransformerBlock(const VarMap& bb, const ViTConfig& config, int layer, Var x) {
  auto p = [&](const char* s) { return Lookup(bb, BlockName(layer, s)); };
  Var h = LayerNorm(x, p("ln1.gain"), p("ln1.bias"), config.ln_eps);
  h = Linear(h, p("attn.qkv.weight"), p("attn.qkv.bias"));
  h = SelfAttention(h, config.heads);
  h = Linear(h, p("attn.proj.weight"), p("attn.proj.bias"));
  x = Add(x, h);
  h = LayerNorm(x, p("ln2.gain"), p("ln2.bias"), config.ln_eps);
  h = Gelu(Linear(h, p("mlp.fc1.weight"), p("mlp.fc1.bias")));
  h = Linear(h, p("mlp.fc2.weight"), p("mlp.fc2.bias"));
  return Add(x, h);
}

Var ClsFeature(const VarMap& bb, const ViTConfig& config, Var tokens) {
  return LayerNorm(RowSlice(tokens, 0, 1), Lookup(bb, "norm.gain"),
                   Lookup(bb, "norm.bias"), config.ln_eps);
}

Var PromptedForward(const VarMap& bb, const ViTConfig& config,
                    Var first_layer_input, std::span<const Var> layer_prompts,
                    Var head_weight, Var head_bias) {
  if (layer_prompts.size() != static_cast<size_t>(config.layers)) {
    throw DimensionError("PromptedForward: " +
                         std::to_string(layer_prompts.size()) +
                         " prompt slots for " + std::to_string(config.layers) +
                         " layers");
  }
  Var x = first_layer_input;
  size_t prompt_rows = 0;
  for (int i = 0; i < config.layers; ++i) {
    const Var& fresh = layer_prompts[i];
    if (fresh.valid()) {
      if (fresh.value().rank() != 2 ||
          fresh.shape()[1] != static_cast<size_t>(config.width)) {
        throw DimensionError("prompt block for layer " + std::to_string(i) +
                             " has shape " + ShapeString(fresh.shape()) +
                             ", width must be " + std::to_string(config.width));
      }
      const size_t rows = x.shape()[0];
      const Var parts[] = {RowSlice(x, 0, 1), fresh,
                           RowSlice(x, 1 + prompt_rows, rows)};
      x = ConcatRows(parts);
      prompt_rows = fresh.shape()[0];
    }
    x = TransformerBlock(bb, config, i, x);
  }
  return Linear(ClsFeature(bb, config, x), head_weight, head_bias);
}

Tensor PatchEmbed(const Backbone& backbone, const Tensor& image) {
  Graph g;
  VarMap bb = backbone.BindFrozen(g);
  return PatchEmbed(bb, backbone.config(), image).value();
}

CleanPass CleanForward(const Backbone& backbone, const Tensor& image,
                       const NamedTensors* head) {
  const ViTConfig& c = backbone.config();
  Graph g;
  VarMap bb = backbone.BindFrozen(g);
  CleanPass out;
  Var x = PatchEmbed(bb, c, image);
  for (int i = 0; i < c.layers; ++i) {
    out.features.layers.push_back(x.value());
    x = TransformerBlock(bb, c, i, x);
  }
  Var cls = ClsFeature(bb, c, x);
  out.cls = cls.value();
  if (head) {
    Var w = g.ConstantRef(Lookup(*head, "head.weight"));
    Var b = g.ConstantRef(Lookup(*head, "head.bias"));
    out.logits = Linear(cls, w, b).value();
  }
  return out;
}

std::vector<Var> ArrangePrompts(Graph& g, const Tensor& prompts, DepthMode mode,
                                int layers) {
  std::vector<Var> slots(layers);
  if (mode == DepthMode::kShallow) {
    Tensor block = prompts.rank() == 3 ? prompts.Index(0) : prompts;
    slots[0] = g.Constant(std::move(block));
    return slots;
  }
  if (prompts.rank() != 3 || prompts.dim(0) != static_cast<size_t>(layers)) {
    throw DimensionError("deep prompts must be [L x K x d], got " +
                         ShapeString(prompts.shape()));
  }
  for (int i = 0; i < layers; ++i) slots[i] = g.Constant(prompts.Index(i));
  return slots;
}

Tensor PromptedForward(const Backbone& backbone, const Tensor& image,
                       const Tensor& prompts, const NamedTensors& head,
                       DepthMode mode) {
  const ViTConfig& c = backbone.config();
  Graph g;
  VarMap bb = backbone.BindFrozen(g);
  Var x = PatchEmbed(bb, c, image);
  std::vector<Var> slots = ArrangePrompts(g, prompts, mode, c.layers);
  return PromptedForward(bb, c, x, slots, g.ConstantRef(Lookup(head, "head.weight")),
                         g.ConstantRef(Lookup(head, "head.bias")))
      .value();
}

Backbone Warmup(const Backbone& init, std::span<const Tensor> images,
                std::span<const int> labels, const WarmupOptions& options) {
  if (images.size() != labels.size() || images.empty()) {
    throw ArgumentError("Warmup needs matching, non-empty images and labels");
  }
  const ViTConfig& c = init.config();
  NamedTensors params = init.params();
  NamedTensors head = InitHead(c, options.seed, 0.02);
  std::vector<size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng shuffle = Rng::Derive(options.seed, StreamTag::kWarmup,
                              {static_cast<uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t end = std::min(order.size(), start + options.batch_size);
      NamedTensors grad_bb = ZerosLike(params);
      NamedTensors grad_head = ZerosLike(head);
      for (size_t k = start; k < end; ++k) {
        Graph g;
        VarMap bb = BindParameters(g, params);
        VarMap hv = BindParameters(g, head);
        Var x = PatchEmbed(bb, c, images[order[k]]);
        std::vector<Var> none(c.layers);
        Var logits = PromptedForward(bb, c, x, none, Lookup(hv, "head.weight"),
                                     Lookup(hv, "head.bias"));
        Var loss = SoftmaxCrossEntropy(logits, labels[order[k]]);
        g.Backward(loss);
        AddScaled(grad_bb, CollectGrads(g, bb), 1.0);
        AddScaled(grad_head, CollectGrads(g, hv), 1.0);
      }
      const double step = -options.lr / static_cast<double>(end - start);
      AddScaled(params, grad_bb, step);
      AddScaled(head, grad_head, step);
    }
  }
  return Backbone(c, std::move(params));
}

}  // namespace pfl
