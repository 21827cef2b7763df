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

#ifndef PFL_DATAGEN_H_
#define PFL_DATAGEN_H_

#include <cstdint>
#include <string>
#include <vector>

#include "pfl/checkpoint.h"
#include "pfl/tensor.h"

namespace pfl {

// Synthetic image classification data with domain styles (feature shift) and
// class templates (content). Every (domain, class) cell has the same size.
struct SyntheticSpec {
  int num_domains = 6;
  int num_classes = 10;
  int samples_per_domain_class = 40;
  int channels = 3;
  int image_h = 16;
  int image_w = 16;
  double noise = 0.8;
  uint64_t template_seed = 11;  // class content
  uint64_t style_seed = 23;     // domain gains, offsets and warp

  void Validate() const;
};

struct Sample {
  Tensor image;  // [channels x H x W]
  int label = 0;
  int domain = 0;
  size_t id = 0;
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<Sample> samples;
};

// Noise-free class template [channels x H x W], unit variance.
Tensor ClassTemplate(const SyntheticSpec& spec, int label);

struct DomainStyle {
  std::vector<double> gain;    // per channel
  std::vector<double> offset;  // per channel
  int shift_y = 0;             // cyclic spatial shift
  int shift_x = 0;
  bool flip = false;           // horizontal mirror before the shift
};

DomainStyle StyleOf(const SyntheticSpec& spec, int domain);
Tensor ApplyStyle(const Tensor& image, const DomainStyle& style);

// Sample (domain, label, index) is a pure function of (spec, seed, domain,
// label, index). Samples are ordered by domain, then class, then index.
Dataset Generate(const SyntheticSpec& spec, uint64_t seed);

struct ClientShard {
  std::vector<size_t> train;  // indices into Dataset::samples
  std::vector<size_t> test;
};

struct Partition {
  std::vector<ClientShard> clients;
};

// Client k holds domains {k, k+1, ..., k+m-1} mod D, all classes; each
// domain's samples are split evenly among its m holders.
Partition FeatureShiftPartition(const Dataset& data, int clients, int m,
                                uint64_t seed);

// Class shards are dealt from concatenated random permutations of the labels
// so client k gets at most s distinct classes; each class's samples are
// split evenly among its holders.
Partition LabelShiftPartition(const Dataset& data, int clients, int s,
                              uint64_t seed);

// Stratified per-class train/test split of one client's indices.
ClientShard SplitTrainTest(const Dataset& data, std::vector<size_t> indices,
                           double test_fraction, uint64_t seed);

// Named-tensor archive: images [N x C x H x W], labels [N], domains [N].
NamedTensors DatasetTensors(const Dataset& data);
// CSV: sample_id,class,domain,client,split (unassigned samples omitted).
std::string ManifestCsv(const Dataset& data, const Partition& partition);

}  // namespace pfl

#endif  // PFL_DATAGEN_H_
