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

#ifndef PFL_OPS_H_
#define PFL_OPS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "pfl/autograd.h"
#include "pfl/tensor.h"

namespace pfl {

inline constexpr double kLayerNormEps = 1e-5;

// Elementwise, identical shapes.
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double c);
Var AddScalar(Var a, double c);
Var Exp(Var a);
// Exact erf-based GELU.
Var Gelu(Var a);
// Sum of all entries, rank-0 result.
Var Sum(Var a);

// [m x k] x [k x n] -> [m x n].
Var MatMul(Var a, Var b);
// x [t x in] * w [in x out] + b [out].
Var Linear(Var x, Var w, Var b);
Var Transpose(Var a);
Var Reshape(Var a, Shape shape);

// Normalises each row over the last axis, then applies gain and bias.
Var LayerNorm(Var x, Var gain, Var bias, double eps = kLayerNormEps);

// Rows [begin, end) of a 2-D tensor.
Var RowSlice(Var x, size_t begin, size_t end);
// Stacks 2-D blocks vertically; zero-row blocks are allowed.
Var ConcatRows(std::span<const Var> blocks);
// Multiplies row j of a 2-D tensor by scale[j] (a constant, e.g. a mask).
Var ScaleRows(Var x, std::span<const double> scale);

// Multi-head scaled dot-product self-attention over a fused [t x 3d]
// query/key/value projection; returns [t x d] before the output projection.
Var SelfAttention(Var qkv, int heads);

// -log softmax(logits)[label], computed with a max shift.
Var SoftmaxCrossEntropy(Var logits, int label);
// Sum over entries of log N(p_i | mu_i, sigma_i^2). Requires sigma > 0.
Var GaussianLogDensity(Var p, Var mu, Var sigma);
// Sum over entries of log N(p_i | 0, 1).
Var StdNormalLogDensity(Var p);
// log sum_i exp(v_i) over one-element Vars.
Var LogSumExp(std::span<const Var> values);

// Plain-value counterparts.
double LogSumExp(std::span<const double> values);
std::vector<double> Softmax(std::span<const double> logits);

}  // namespace pfl

#endif  // PFL_OPS_H_
