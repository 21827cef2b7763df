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


#include "pfl/grad_suite.h"

#include <cmath>

#include "pfl/objective.h"
#include "pfl/ops.h"
#include "pfl/rng.h"

namespace pfl {
namespace {

Tensor RandomTensor(Shape shape, Rng& rng, double scale = 1.0, double shift = 0.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = shift + scale * rng.Normal();
  return t;
}

Tensor PositiveTensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = 0.5 + rng.Uniform();
  return t;
}

// Weighted sum so that every output coordinate gets a distinct cotangent.
Var Project(Var y, const Tensor& weights) {
  Graph& g = y.graph();
  return Sum(Mul(y, g.Constant(weights.Reshaped(y.shape()))));
}

struct PrimitiveCase {
  std::string name;
  std::vector<Tensor> inputs;
  LossFn loss;
};

std::vector<PrimitiveCase> PrimitiveCases(Rng& rng) {
  std::vector<PrimitiveCase> cases;
  const Tensor w34 = RandomTensor({3, 4}, rng);
  const Tensor w32 = RandomTensor({3, 2}, rng);
  const Tensor w35 = RandomTensor({3, 5}, rng);
  const Tensor w42 = RandomTensor({4, 2}, rng);
  const Tensor w44 = RandomTensor({4, 4}, rng);
  auto unary = [&](std::string name, Var (*op)(Var)) {
    Tensor proj = w34;
    cases.push_back({std::move(name), {RandomTensor({3, 4}, rng)},
                     [op, proj](Graph&, std::span<const Var> p) {
                       return Project(op(p[0]), proj);
                     }});
  };
  auto binary = [&](std::string name, Var (*op)(Var, Var)) {
    Tensor proj = w34;
    cases.push_back({std::move(name), {RandomTensor({3, 4}, rng), RandomTensor({3, 4}, rng)},
                     [op, proj](Graph&, std::span<const Var> p) {
                       return Project(op(p[0], p[1]), proj);
                     }});
  };
  binary("add", Add);
  binary("sub", Sub);
  binary("mul", Mul);
  unary("exp", Exp);
  unary("gelu", Gelu);
  unary("transpose", Transpose);
  cases.push_back({"scale", {RandomTensor({3, 4}, rng)},
                   [w34](Graph&, std::span<const Var> p) {
                     return Project(AddScalar(Scale(p[0], -1.7), 0.3), w34);
                   }});
  cases.push_back({"sum", {RandomTensor({3, 4}, rng)},
                   [](Graph&, std::span<const Var> p) { return Sum(p[0]); }});
  cases.push_back({"matmul", {RandomTensor({3, 4}, rng), RandomTensor({4, 2}, rng)},
                   [w32](Graph&, std::span<const Var> p) {
                     return Project(MatMul(p[0], p[1]), w32);
                   }});
  cases.push_back({"linear",
                   {RandomTensor({3, 4}, rng), RandomTensor({4, 2}, rng),
                    RandomTensor({2}, rng)},
                   [w32](Graph&, std::span<const Var> p) {
                     return Project(Linear(p[0], p[1], p[2]), w32);
                   }});
  cases.push_back({"reshape", {RandomTensor({3, 4}, rng)},
                   [w34](Graph&, std::span<const Var> p) {
                     return Project(Reshape(p[0], {4, 3}), w34);
                   }});
  cases.push_back({"layer_norm",
                   {RandomTensor({3, 5}, rng), RandomTensor({5}, rng, 0.3, 1.0),
                    RandomTensor({5}, rng)},
                   [w35](Graph&, std::span<const Var> p) {
                     return Project(LayerNorm(p[0], p[1], p[2]), w35);
                   }});
  cases.push_back({"row_slice", {RandomTensor({5, 3}, rng)},
                   [w34](Graph&, std::span<const Var> p) {
                     return Project(Transpose(RowSlice(p[0], 1, 5)), w34);
                   }});
  cases.push_back({"concat_rows", {RandomTensor({1, 4}, rng), RandomTensor({2, 4}, rng)},
                   [w34](Graph&, std::span<const Var> p) {
                     return Project(ConcatRows(p), w34);
                   }});
  cases.push_back({"scale_rows", {RandomTensor({3, 4}, rng)},
                   [w34](Graph&, std::span<const Var> p) {
                     const double mask[] = {1.0, 0.0, 1.0};
                     return Project(ScaleRows(p[0], mask), w34);
                   }});
  cases.push_back({"self_attention", {RandomTensor({4, 6}, rng)},
                   [w42](Graph&, std::span<const Var> p) {
                     return Project(SelfAttention(p[0], 1), w42);
                   }});
  cases.push_back({"self_attention_heads", {RandomTensor({4, 12}, rng)},
                   [w44](Graph&, std::span<const Var> p) {
                     return Project(SelfAttention(p[0], 2), w44);
                   }});
  cases.push_back({"softmax_cross_entropy", {RandomTensor({1, 5}, rng)},
                   [](Graph&, std::span<const Var> p) {
                     return SoftmaxCrossEntropy(p[0], 3);
                   }});
  cases.push_back({"gaussian_log_density",
                   {RandomTensor({2, 3}, rng), RandomTensor({2, 3}, rng),
                    PositiveTensor({2, 3}, rng)},
                   [](Graph&, std::span<const Var> p) {
                     return GaussianLogDensity(p[0], p[1], p[2]);
                   }});
  cases.push_back({"std_normal_log_density", {RandomTensor({2, 3}, rng)},
                   [](Graph&, std::span<const Var> p) { return StdNormalLogDensity(p[0]); }});
  cases.push_back({"log_sum_exp",
                   {RandomTensor({}, rng), RandomTensor({}, rng), RandomTensor({}, rng)},
                   [](Graph&, std::span<const Var> p) { return LogSumExp(p); }});
  return cases;
}

// Synthetic instance with random features and image.
Instance ToyInstance(const Backbone& backbone, Rng& rng) {
  const ViTConfig& c = backbone.config();
  Tensor image = RandomTensor({static_cast<size_t>(c.channels),
                               static_cast<size_t>(c.image_h),
                               static_cast<size_t>(c.image_w)},
                              rng);
  return MakeInstance(backbone, image, 1, 0, 0);
}

BoundModel BindFromVars(Graph& g, const Backbone& backbone, const ModelSpec& spec,
                        const std::vector<std::string>& names,
                        std::span<const Var> vars) {
  BoundModel m;
  m.backbone = &backbone;
  m.spec = &spec;
  m.bb = backbone.BindFrozen(g);
  for (size_t i = 0; i < names.size(); ++i) m.params.emplace(names[i], vars[i]);
  return m;
}

}  // namespace

std::vector<GradSuiteEntry> RunGradSuite(const ModelSpec& spec,
                                         const GradSuiteOptions& options) {
  std::vector<GradSuiteEntry> out;
  Rng rng = Rng::Derive(options.seed, StreamTag::kInit, {0x6c});
  for (PrimitiveCase& c : PrimitiveCases(rng)) {
    out.push_back({"primitive/" + c.name, GradCheck(c.loss, c.inputs),
                   options.primitive_tol});
  }

  GradCheckOptions sampled;
  sampled.max_coords_per_tensor = options.model_coords;
  sampled.sample_seed = options.seed;
  const Backbone backbone = Backbone::Random(spec.vit, options.seed + 1);
  const Instance x = ToyInstance(backbone, rng);

  {
    // Deep prompted forward w.r.t. per-layer prompt blocks and the head.
    const ViTConfig& vit = spec.vit;
    std::vector<Tensor> params;
    for (int i = 0; i < vit.layers; ++i) {
      params.push_back(RandomTensor({3, static_cast<size_t>(vit.width)}, rng, 0.3));
    }
    const NamedTensors head = InitHead(vit, options.seed, 0.3);
    params.push_back(head.at("head.weight"));
    params.push_back(head.at("head.bias"));
    auto loss = [&](Graph& g, std::span<const Var> p) {
      VarMap bb = backbone.BindFrozen(g);
      std::vector<Var> prompts(p.begin(), p.begin() + vit.layers);
      Var f1 = g.ConstantRef(x.features.layers[0]);
      Var logits = PromptedForward(bb, vit, f1, prompts, p[vit.layers], p[vit.layers + 1]);
      return SoftmaxCrossEntropy(logits, x.label);
    };
    out.push_back({"model/prompted_forward", GradCheck(loss, params, sampled),
                   options.model_tol});
  }

  for (const auto& [S, J] : {std::pair{1, 1}, std::pair{2, 3}}) {
    // Surrogate objective w.r.t. the global prompt, head and encoder.
    ModelSpec s = spec;
    s.method = Method::kBayesPt;
    s.prompt.aux_samples = S;
    s.prompt.iw_samples = J;
    NamedTensors global = InitGlobalParams(s, options.seed);
    // Move off the initial point so every path carries gradient.
    for (auto& [name, t] : global) {
      for (double& v : t.values()) v += 0.05 * rng.Normal();
    }
    std::vector<std::string> names;
    std::vector<Tensor> values;
    for (const auto& [name, t] : global) {
      names.push_back(name);
      values.push_back(t);
    }
    const PromptConfig config = EffectivePromptConfig(s);
    Rng draw_rng = Rng::Derive(options.seed, StreamTag::kSample, {0xe1b0});
    const SurrogateDraws draws = DrawSurrogate(config, s.vit, draw_rng);
    auto loss = [&](Graph& g, std::span<const Var> p) {
      BoundModel m = BindFromVars(g, backbone, s, names, p);
      return SurrogateElbo(m, x, config, draws).value;
    };
    out.push_back({"model/surrogate_elbo_S" + std::to_string(S) + "_J" + std::to_string(J),
                   GradCheck(loss, values, sampled), options.model_tol});
  }
  return out;
}

}  // namespace pfl
