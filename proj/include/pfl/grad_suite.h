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


#ifndef PFL_GRAD_SUITE_H_
#define PFL_GRAD_SUITE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "pfl/grad_check.h"
#include "pfl/model.h"

namespace pfl {

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
  double tolerance = 0.0;

  bool passed() const { return report.Passed(tolerance); }
};

struct GradSuiteOptions {
  uint64_t seed = 0;
  // Coordinates sampled per tensor in the model-level checks (0 = all).
  size_t model_coords = 24;
  double primitive_tol = 1e-6;
  double model_tol = 1e-4;
};

// Finite-difference checks of every primitive op, of the prompted forward
// pass w.r.t. prompts and head, and of the surrogate objective w.r.t. the
// global prompt, head and encoder with frozen draws.
std::vector<GradSuiteEntry> RunGradSuite(const ModelSpec& spec,
                                         const GradSuiteOptions& options = {});

}  // namespace pfl

#endif  // PFL_GRAD_SUITE_H_
