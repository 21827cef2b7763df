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


// Structural scans of a partition. Each returns human-readable violations;
// an empty list means the invariant holds.

#ifndef PFL_TESTS_SUPPORT_PARTITION_CHECKS_H_
#define PFL_TESTS_SUPPORT_PARTITION_CHECKS_H_

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pfl/datagen.h"

namespace pfl::testing {

inline std::vector<size_t> ShardOf(const ClientShard& c) {
  std::vector<size_t> all = c.train;
  all.insert(all.end(), c.test.begin(), c.test.end());
  return all;
}

// Disjointness across clients and splits, and exact coverage of `expected`.
inline std::vector<std::string> CheckDisjointCover(const Partition& p,
                                                   const std::set<size_t>& expected) {
  std::vector<std::string> bad;
  std::map<size_t, int> seen;
  for (size_t k = 0; k < p.clients.size(); ++k)
    for (size_t i : ShardOf(p.clients[k]))
      if (seen[i]++ > 0) bad.push_back("sample " + std::to_string(i) + " held twice");
  std::set<size_t> got;
  for (const auto& [i, n] : seen) got.insert(i);
  if (got != expected) {
    bad.push_back("covered " + std::to_string(got.size()) + " samples, expected " +
                  std::to_string(expected.size()));
  }
  return bad;
}

// Per class on each client: test count is round(0.2 n) clamped to [1, n - 1]
// when n >= 2, and both splits are non-empty.
inline std::vector<std::string> CheckSplits(const Dataset& d, const Partition& p) {
  std::vector<std::string> bad;
  for (size_t k = 0; k < p.clients.size(); ++k) {
    const ClientShard& c = p.clients[k];
    const std::string who = "client " + std::to_string(k);
    if (c.train.empty()) bad.push_back(who + ": empty train split");
    if (c.test.empty()) bad.push_back(who + ": empty test split");
    std::map<int, int> total, test;
    for (size_t i : ShardOf(c)) ++total[d.samples[i].label];
    for (size_t i : c.test) ++test[d.samples[i].label];
    for (const auto& [label, n] : total) {
      if (n < 2) continue;
      const int want = std::clamp(static_cast<int>(std::lround(0.2 * n)), 1, n - 1);
      if (test[label] != want) {
        bad.push_back(who + ": class " + std::to_string(label) + " has " +
                      std::to_string(test[label]) + " test samples of " +
                      std::to_string(n) + ", expected " + std::to_string(want));
      }
    }
  }
  return bad;
}

inline std::set<size_t> AllSamples(const Dataset& d) {
  std::set<size_t> s;
  for (size_t i = 0; i < d.samples.size(); ++i) s.insert(i);
  return s;
}

// Exactly m domains per client, every class on every client, each domain held
// by exactly m clients.
inline std::vector<std::string> CheckFeatureShift(const Dataset& d, const Partition& p,
                                                  int m) {
  std::vector<std::string> bad = CheckDisjointCover(p, AllSamples(d));
  for (const std::string& s : CheckSplits(d, p)) bad.push_back(s);
  std::map<int, int> holders;
  for (size_t k = 0; k < p.clients.size(); ++k) {
    std::set<int> domains, classes;
    for (size_t i : ShardOf(p.clients[k])) {
      domains.insert(d.samples[i].domain);
      classes.insert(d.samples[i].label);
    }
    for (int dom : domains) ++holders[dom];
    if (static_cast<int>(domains.size()) != m) {
      bad.push_back("client " + std::to_string(k) + " holds " +
                    std::to_string(domains.size()) + " domains, expected " +
                    std::to_string(m));
    }
    if (static_cast<int>(classes.size()) != d.spec.num_classes) {
      bad.push_back("client " + std::to_string(k) + " misses classes");
    }
  }
  for (int dom = 0; dom < d.spec.num_domains; ++dom) {
    if (holders[dom] != m) {
      bad.push_back("domain " + std::to_string(dom) + " held by " +
                    std::to_string(holders[dom]) + " clients");
    }
  }
  return bad;
}

// At most s classes per client; every sample of a held class is assigned and
// a class's samples are dealt evenly (holder counts differ by at most one).
inline std::vector<std::string> CheckLabelShift(const Dataset& d, const Partition& p,
                                                int s) {
  std::set<int> held;
  std::vector<std::set<int>> classes(p.clients.size());
  for (size_t k = 0; k < p.clients.size(); ++k)
    for (size_t i : ShardOf(p.clients[k])) classes[k].insert(d.samples[i].label);
  for (const auto& c : classes) held.insert(c.begin(), c.end());
  std::set<size_t> expected;
  for (size_t i = 0; i < d.samples.size(); ++i)
    if (held.count(d.samples[i].label)) expected.insert(i);
  std::vector<std::string> bad = CheckDisjointCover(p, expected);
  for (const std::string& e : CheckSplits(d, p)) bad.push_back(e);
  const int slots = static_cast<int>(p.clients.size()) * s;
  if (slots >= d.spec.num_classes && static_cast<int>(held.size()) != d.spec.num_classes) {
    bad.push_back("only " + std::to_string(held.size()) + " classes assigned");
  }
  for (size_t k = 0; k < p.clients.size(); ++k) {
    if (static_cast<int>(classes[k].size()) > s) {
      bad.push_back("client " + std::to_string(k) + " holds " +
                    std::to_string(classes[k].size()) + " classes > s = " + std::to_string(s));
    }
  }
  for (int label : held) {
    std::vector<int> counts;
    for (size_t k = 0; k < p.clients.size(); ++k) {
      int n = 0;
      for (size_t i : ShardOf(p.clients[k])) n += d.samples[i].label == label;
      if (n > 0) counts.push_back(n);
    }
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi - *lo > 1) {
      bad.push_back("class " + std::to_string(label) + " split unevenly");
    }
  }
  return bad;
}

}  // namespace pfl::testing

#endif  // PFL_TESTS_SUPPORT_PARTITION_CHECKS_H_
