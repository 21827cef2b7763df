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

#include "pfl/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pfl/errors.h"
#include "pfl/rng.h"

namespace pfl {
namespace {

double Evaluate(const LossFn& loss, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(g.Constant(p));
  return loss(g, leaves).item();
}

}  // namespace

GradCheckReport GradCheck(const LossFn& loss, const std::vector<Tensor>& params,
                          const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  double base = 0.0;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(g.Parameter(p));
    Var root = loss(g, leaves);
    base = root.item();
    g.Backward(root);
    for (Var v : leaves) analytic.push_back(g.grad(v));
  }
  const double again = Evaluate(loss, params);
  if (again != base) {
    std::ostringstream os;
    os.precision(17);
    os << "loss is not deterministic at a fixed point: " << base << " vs "
       << again;
    throw ContractError(os.str());
  }

  GradCheckReport report;
  std::vector<Tensor> work = params;
  for (size_t t = 0; t < params.size(); ++t) {
    std::vector<size_t> coords(params[t].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 &&
        coords.size() > options.max_coords_per_tensor) {
      Rng rng = Rng::Derive(options.sample_seed, {t});
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (size_t i : coords) {
      const double x0 = params[t][i];
      const double h = options.rel_step * std::max(1.0, std::abs(x0));
      auto at = [&](double offset) {
        work[t][i] = x0 + offset;
        return Evaluate(loss, work);
      };
      const double d1 = at(h) - at(-h);
      const double d2 = at(2.0 * h) - at(-2.0 * h);
      work[t][i] = x0;
      const double numeric = (8.0 * d1 - d2) / (12.0 * h);
      const double a = analytic[t][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      report.max_abs_analytic = std::max(report.max_abs_analytic, std::abs(a));
      report.max_abs_numeric = std::max(report.max_abs_numeric, std::abs(numeric));
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        std::ostringstream os;
        os.precision(10);
        os << "param" << t << "[" << i << "] analytic=" << a
           << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

}  // namespace pfl
