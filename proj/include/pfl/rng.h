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

#ifndef PFL_RNG_H_
#define PFL_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pfl {

// Stream tags used when deriving substreams, so that e.g. auxiliary posterior
// draws never shift the noise consumed by the importance samples.
enum class StreamTag : uint64_t {
  kInit = 1,
  kData = 2,
  kPartition = 3,
  kSelect = 4,
  kShuffle = 5,
  kSample = 6,
  kAux = 7,
  kMain = 8,
  kEval = 9,
  kWarmup = 10,
};

// Seeded 64-bit generator with deterministic substream derivation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Substream keyed by (seed, keys...). Identical keys give identical streams
  // regardless of how much the parent has been consumed.
  static Rng Derive(uint64_t seed, std::initializer_list<uint64_t> keys);
  static Rng Derive(uint64_t seed, StreamTag tag,
                    std::initializer_list<uint64_t> keys);

  uint64_t NextU64() { return engine_(); }
  double Uniform();  // [0, 1)
  double Normal();   // N(0, 1)
  bool Bernoulli(double p) { return Uniform() < p; }
  // Uniform integer in [0, n).
  size_t Below(size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

uint64_t MixKey(uint64_t h, uint64_t v);

}  // namespace pfl

#endif  // PFL_RNG_H_
