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


#ifndef PFL_PARALLEL_H_
#define PFL_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace pfl {

// Worker cap: PFL_MAX_WORKERS if set to a positive integer, else the
// hardware concurrency (at least 1).
int MaxWorkers();

// Runs fn(0..n-1) on up to `workers` threads. Work items must write to
// disjoint outputs. The first exception thrown by any item is rethrown.
void ParallelFor(size_t n, int workers, const std::function<void(size_t)>& fn);

}  // namespace pfl

#endif  // PFL_PARALLEL_H_
