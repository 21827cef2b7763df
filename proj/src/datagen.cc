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

#include "pfl/datagen.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "pfl/errors.h"
#include "pfl/rng.h"

namespace pfl {
namespace {

constexpr double kTestFraction = 0.2;

// Deals `indices` round-robin to `holders` after a seeded shuffle.
void Deal(std::vector<size_t> indices, const std::vector<int>& holders,
          Rng& rng, std::vector<std::vector<size_t>>& out) {
  std::shuffle(indices.begin(), indices.end(), rng.engine());
  for (size_t i = 0; i < indices.size(); ++i) {
    out[holders[i % holders.size()]].push_back(indices[i]);
  }
}

Partition Finish(const Dataset& data, std::vector<std::vector<size_t>> owned,
                 uint64_t seed) {
  Partition p;
  for (size_t k = 0; k < owned.size(); ++k) {
    p.clients.push_back(
        SplitTrainTest(data, std::move(owned[k]), kTestFraction,
                       MixKey(seed, 0x5711 + k)));
  }
  return p;
}

}  // namespace

void SyntheticSpec::Validate() const {
  auto need = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw ConfigError(std::string(field) + ": " + why);
  };
  need(num_domains >= 1, "num_domains", "must be >= 1");
  need(num_classes >= 2, "num_classes", "must be >= 2");
  need(samples_per_domain_class >= 1, "samples_per_domain_class", "must be >= 1");
  need(channels >= 1 && image_h >= 1 && image_w >= 1, "image", "extents must be >= 1");
  need(noise >= 0.0, "noise", "must be >= 0");
}

Tensor ClassTemplate(const SyntheticSpec& spec, int label) {
  Rng rng = Rng::Derive(spec.template_seed, StreamTag::kData,
                        {static_cast<uint64_t>(label), 0xc1a55});
  const size_t c = spec.channels, h = spec.image_h, w = spec.image_w;
  Tensor t({c, h, w}, 0.0);
  for (size_t ch = 0; ch < c; ++ch) {
    for (int blob = 0; blob < 3; ++blob) {
      const double cy = rng.Uniform() * h, cx = rng.Uniform() * w;
      const double sd = 1.5 + 2.0 * rng.Uniform();
      const double amp = (rng.Bernoulli(0.5) ? 1.0 : -1.0) * (0.5 + rng.Uniform());
      for (size_t y = 0; y < h; ++y) {
        for (size_t x = 0; x < w; ++x) {
          const double dy = y - cy, dx = x - cx;
          t[(ch * h + y) * w + x] += amp * std::exp(-(dy * dy + dx * dx) / (2 * sd * sd));
        }
      }
    }
    // Low-frequency stripe pattern.
    const double fy = rng.Uniform() * 0.6, fx = rng.Uniform() * 0.6;
    const double phase = rng.Uniform() * 6.283185307179586;
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        t[(ch * h + y) * w + x] += 0.5 * std::sin(fy * y + fx * x + phase);
      }
    }
  }
  double mean = 0.0;
  for (double v : t.values()) mean += v;
  mean /= t.size();
  double var = 0.0;
  for (double v : t.values()) var += (v - mean) * (v - mean);
  const double inv = 1.0 / std::sqrt(var / t.size());
  for (double& v : t.values()) v = (v - mean) * inv;
  return t;
}

DomainStyle StyleOf(const SyntheticSpec& spec, int domain) {
  Rng rng = Rng::Derive(spec.style_seed, StreamTag::kData,
                        {static_cast<uint64_t>(domain), 0x57});
  DomainStyle s;
  for (int ch = 0; ch < spec.channels; ++ch) {
    s.gain.push_back(0.5 + rng.Uniform());
    s.offset.push_back(1.2 * rng.Uniform() - 0.6);
  }
  s.shift_y = static_cast<int>(rng.Below(4));
  s.shift_x = static_cast<int>(rng.Below(4));
  s.flip = rng.Bernoulli(0.5);
  return s;
}

Tensor ApplyStyle(const Tensor& image, const DomainStyle& style) {
  const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        const size_t sx = style.flip ? w - 1 - x : x;
        const size_t ty = (y + style.shift_y) % h, tx = (sx + style.shift_x) % w;
        out[(ch * h + ty) * w + tx] =
            style.gain[ch] * image[(ch * h + y) * w + x] + style.offset[ch];
      }
    }
  }
  return out;
}

Dataset Generate(const SyntheticSpec& spec, uint64_t seed) {
  spec.Validate();
  Dataset data;
  data.spec = spec;
  std::vector<Tensor> templates;
  for (int c = 0; c < spec.num_classes; ++c) templates.push_back(ClassTemplate(spec, c));
  for (int d = 0; d < spec.num_domains; ++d) {
    const DomainStyle style = StyleOf(spec, d);
    for (int c = 0; c < spec.num_classes; ++c) {
      const Tensor clean = ApplyStyle(templates[c], style);
      for (int i = 0; i < spec.samples_per_domain_class; ++i) {
        Rng rng = Rng::Derive(seed, StreamTag::kData,
                              {static_cast<uint64_t>(d), static_cast<uint64_t>(c),
                               static_cast<uint64_t>(i)});
        Sample s;
        s.image = clean;
        if (spec.noise > 0.0) {
          for (double& v : s.image.values()) v += spec.noise * rng.Normal();
        }
        s.label = c;
        s.domain = d;
        s.id = data.samples.size();
        data.samples.push_back(std::move(s));
      }
    }
  }
  return data;
}

ClientShard SplitTrainTest(const Dataset& data, std::vector<size_t> indices,
                           double test_fraction, uint64_t seed) {
  std::sort(indices.begin(), indices.end());
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i : indices) by_class[data.samples[i].label].push_back(i);
  Rng rng(seed);
  ClientShard shard;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    size_t n_test = static_cast<size_t>(std::lround(test_fraction * idx.size()));
    if (idx.size() >= 2) n_test = std::clamp<size_t>(n_test, 1, idx.size() - 1);
    else n_test = 0;
    shard.test.insert(shard.test.end(), idx.begin(), idx.begin() + n_test);
    shard.train.insert(shard.train.end(), idx.begin() + n_test, idx.end());
  }
  if (shard.test.empty() && shard.train.size() >= 2) {
    shard.test.push_back(shard.train.back());
    shard.train.pop_back();
  }
  std::sort(shard.train.begin(), shard.train.end());
  std::sort(shard.test.begin(), shard.test.end());
  return shard;
}

Partition FeatureShiftPartition(const Dataset& data, int clients, int m,
                                uint64_t seed) {
  const int domains = data.spec.num_domains;
  if (m < 1 || m > domains) {
    throw ConfigError("m: must lie in [1, " + std::to_string(domains) + "]");
  }
  if (clients != domains) {
    throw ConfigError("clients: feature-shift track needs one client per domain (" +
                      std::to_string(domains) + ")");
  }
  std::vector<std::vector<size_t>> owned(clients);
  std::map<std::pair<int, int>, std::vector<size_t>> cells;
  for (const Sample& s : data.samples) cells[{s.domain, s.label}].push_back(s.id);
  Rng rng = Rng::Derive(seed, StreamTag::kPartition, {0xf5});
  for (int d = 0; d < domains; ++d) {
    std::vector<int> holders;
    for (int t = 0; t < m; ++t) holders.push_back(((d - t) % domains + domains) % domains);
    std::sort(holders.begin(), holders.end());
    for (int c = 0; c < data.spec.num_classes; ++c) {
      auto it = cells.find({d, c});
      if (it == cells.end()) continue;
      Deal(it->second, holders, rng, owned);
    }
  }
  return Finish(data, std::move(owned), seed);
}

Partition LabelShiftPartition(const Dataset& data, int clients, int s,
                              uint64_t seed) {
  const int classes = data.spec.num_classes;
  if (s < 1 || s > classes) {
    throw ConfigError("s: must lie in [1, " + std::to_string(classes) + "]");
  }
  if (clients < 1) throw ConfigError("clients: must be >= 1");
  Rng rng = Rng::Derive(seed, StreamTag::kPartition, {0x15});
  std::vector<int> sequence;
  const size_t slots = static_cast<size_t>(clients) * s;
  while (sequence.size() < slots) {
    std::vector<int> perm(classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    sequence.insert(sequence.end(), perm.begin(), perm.end());
  }
  std::vector<std::vector<int>> holders(classes);
  for (int k = 0; k < clients; ++k) {
    std::set<int> mine(sequence.begin() + k * s, sequence.begin() + (k + 1) * s);
    for (int c : mine) holders[c].push_back(k);
  }
  std::vector<std::vector<size_t>> by_class(classes);
  for (const Sample& x : data.samples) by_class[x.label].push_back(x.id);
  std::vector<std::vector<size_t>> owned(clients);
  for (int c = 0; c < classes; ++c) {
    if (holders[c].empty()) continue;
    Deal(by_class[c], holders[c], rng, owned);
  }
  return Finish(data, std::move(owned), seed);
}

NamedTensors DatasetTensors(const Dataset& data) {
  const SyntheticSpec& s = data.spec;
  const size_t n = data.samples.size();
  Tensor images({n, static_cast<size_t>(s.channels), static_cast<size_t>(s.image_h),
                 static_cast<size_t>(s.image_w)});
  Tensor labels({n}), domains({n});
  const size_t stride = NumElements({static_cast<size_t>(s.channels),
                                     static_cast<size_t>(s.image_h),
                                     static_cast<size_t>(s.image_w)});
  for (size_t i = 0; i < n; ++i) {
    const Sample& x = data.samples[i];
    std::copy(x.image.data(), x.image.data() + stride, images.data() + i * stride);
    labels[i] = x.label;
    domains[i] = x.domain;
  }
  return {{"images", std::move(images)},
          {"labels", std::move(labels)},
          {"domains", std::move(domains)}};
}

std::string ManifestCsv(const Dataset& data, const Partition& partition) {
  struct Row { int client; const char* split; };
  std::vector<std::vector<Row>> rows(data.samples.size());
  for (size_t k = 0; k < partition.clients.size(); ++k) {
    for (size_t i : partition.clients[k].train) rows[i].push_back({static_cast<int>(k), "train"});
    for (size_t i : partition.clients[k].test) rows[i].push_back({static_cast<int>(k), "test"});
  }
  std::ostringstream os;
  os << "sample_id,class,domain,client,split\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    for (const Row& r : rows[i]) {
      os << i << "," << data.samples[i].label << "," << data.samples[i].domain << ","
         << r.client << "," << r.split << "\n";
    }
  }
  return os.str();
}

}  // namespace pfl
