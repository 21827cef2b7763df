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

#ifndef PFL_GRAD_CHECK_H_
#define PFL_GRAD_CHECK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pfl/autograd.h"
#include "pfl/tensor.h"

namespace pfl {

struct GradCheckOptions {
  // Five-point central differences with step rel_step * max(1, |theta_i|).
  double rel_step = 1e-3;
  // 0 checks every coordinate; otherwise a deterministic sample per tensor.
  size_t max_coords_per_tensor = 0;
  uint64_t sample_seed = 0;
  // Denominator floor of the relative error, so that coordinates whose true
  // gradient is zero are judged on absolute error.
  double abs_floor = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  size_t coords_checked = 0;
  std::string worst;  // "param[i] analytic=... numeric=..."

  bool Passed(double tol) const { return max_rel_error < tol; }
};

// Builds the scalar loss on a fresh graph from leaves bound to `params`.
// Any randomness must be re-seeded identically on every call.
using LossFn = std::function<Var(Graph&, std::span<const Var> params)>;

// Compares reverse-mode gradients of `loss` with fourth-order central
// differences.
// Throws ContractError when two evaluations at the same point disagree.
GradCheckReport GradCheck(const LossFn& loss, const std::vector<Tensor>& params,
                          const GradCheckOptions& options = {});

}  // namespace pfl

#endif  // PFL_GRAD_CHECK_H_
