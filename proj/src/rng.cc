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

#include "pfl/rng.h"

namespace pfl {
namespace {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t MixKey(uint64_t h, uint64_t v) { return SplitMix64(h ^ SplitMix64(v)); }

Rng Rng::Derive(uint64_t seed, std::initializer_list<uint64_t> keys) {
  uint64_t h = SplitMix64(seed);
  for (uint64_t k : keys) h = MixKey(h, k);
  return Rng(h);
}

Rng Rng::Derive(uint64_t seed, StreamTag tag,
                std::initializer_list<uint64_t> keys) {
  uint64_t h = MixKey(SplitMix64(seed), static_cast<uint64_t>(tag));
  for (uint64_t k : keys) h = MixKey(h, k);
  return Rng(h);
}

double Rng::Uniform() { return uniform_(engine_); }

double Rng::Normal() { return normal_(engine_); }

size_t Rng::Below(size_t n) {
  std::uniform_int_distribution<size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace pfl
