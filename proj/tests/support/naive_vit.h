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


// Loop-level reference implementation of the frozen ViT, written without the
// op library, used as an oracle for the graph-based forward passes.

#ifndef PFL_TESTS_SUPPORT_NAIVE_VIT_H_
#define PFL_TESTS_SUPPORT_NAIVE_VIT_H_

#include <cmath>
#include <string>
#include <vector>

#include "pfl/checkpoint.h"
#include "pfl/vit.h"

namespace pfl::naive {

using Rows = std::vector<std::vector<double>>;

inline Rows ToRows(const Tensor& t) {
  Rows r(t.dim(0), std::vector<double>(t.dim(1)));
  for (size_t i = 0; i < r.size(); ++i)
    for (size_t j = 0; j < r[i].size(); ++j) r[i][j] = t.at(i, j);
  return r;
}

inline Rows Linear(const Rows& x, const Tensor& w, const Tensor& b) {
  const size_t in = w.dim(0), out = w.dim(1);
  Rows y(x.size(), std::vector<double>(out));
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (size_t k = 0; k < in; ++k) s += x[i][k] * w.at(k, o);
      y[i][o] = s;
    }
  }
  return y;
}

inline Rows LayerNorm(const Rows& x, const Tensor& gain, const Tensor& bias, double eps) {
  Rows y = x;
  for (auto& row : y) {
    double mean = 0.0, var = 0.0;
    for (double v : row) mean += v;
    mean /= row.size();
    for (double v : row) var += (v - mean) * (v - mean);
    var /= row.size();
    for (size_t j = 0; j < row.size(); ++j)
      row[j] = (row[j] - mean) / std::sqrt(var + eps) * gain[j] + bias[j];
  }
  return y;
}

inline double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Rows Attention(const Rows& qkv, int heads) {
  const size_t t = qkv.size(), d = qkv[0].size() / 3, hd = d / heads;
  Rows out(t, std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h) {
    for (size_t i = 0; i < t; ++i) {
      std::vector<double> score(t);
      double mx = -1e300;
      for (size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (size_t c = 0; c < hd; ++c) s += qkv[i][h * hd + c] * qkv[j][d + h * hd + c];
        score[j] = s / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, score[j]);
      }
      double z = 0.0;
      for (double& s : score) z += (s = std::exp(s - mx));
      for (size_t j = 0; j < t; ++j)
        for (size_t c = 0; c < hd; ++c)
          out[i][h * hd + c] += score[j] / z * qkv[j][2 * d + h * hd + c];
    }
  }
  return out;
}

inline Rows Block(const NamedTensors& p, const ViTConfig& c, int layer, const Rows& x) {
  auto w = [&](const std::string& s) -> const Tensor& {
    return p.at("block" + std::to_string(layer) + "." + s);
  };
  Rows h = LayerNorm(x, w("ln1.gain"), w("ln1.bias"), c.ln_eps);
  h = Linear(Attention(Linear(h, w("attn.qkv.weight"), w("attn.qkv.bias")), c.heads),
             w("attn.proj.weight"), w("attn.proj.bias"));
  Rows y = x;
  for (size_t i = 0; i < y.size(); ++i)
    for (size_t j = 0; j < y[i].size(); ++j) y[i][j] += h[i][j];
  h = LayerNorm(y, w("ln2.gain"), w("ln2.bias"), c.ln_eps);
  h = Linear(h, w("mlp.fc1.weight"), w("mlp.fc1.bias"));
  for (auto& row : h)
    for (double& v : row) v = Gelu(v);
  h = Linear(h, w("mlp.fc2.weight"), w("mlp.fc2.bias"));
  for (size_t i = 0; i < y.size(); ++i)
    for (size_t j = 0; j < y[i].size(); ++j) y[i][j] += h[i][j];
  return y;
}

// Patch p covers rows (p / grid_w) * ph.., columns (p % grid_w) * pw..;
// flattened channel-major, then row, then column.
inline Rows Embed(const NamedTensors& p, const ViTConfig& c, const Tensor& image) {
  const int gw = c.image_w / c.patch_w;
  Rows patches;
  for (int q = 0; q < c.patch_count(); ++q) {
    std::vector<double> flat;
    for (int ch = 0; ch < c.channels; ++ch)
      for (int y = 0; y < c.patch_h; ++y)
        for (int x = 0; x < c.patch_w; ++x)
          flat.push_back(image[(ch * c.image_h + (q / gw) * c.patch_h + y) * c.image_w +
                               (q % gw) * c.patch_w + x]);
    patches.push_back(flat);
  }
  Rows proj = Linear(patches, p.at("embed.proj.weight"), p.at("embed.proj.bias"));
  const Tensor& pos = p.at("embed.pos");
  Rows out;
  out.push_back(std::vector<double>(p.at("embed.cls").values().begin(),
                                    p.at("embed.cls").values().end()));
  for (size_t i = 0; i < proj.size(); ++i) {
    for (size_t j = 0; j < proj[i].size(); ++j) proj[i][j] += pos.at(i, j);
    out.push_back(proj[i]);
  }
  return out;
}

// `prompts[i]` empty: pass the previous prompt outputs through. Otherwise the
// rows between CLS and the patches are replaced by `prompts[i]`.
inline std::vector<double> Forward(const NamedTensors& p, const ViTConfig& c,
                                   const Tensor& image, const std::vector<Rows>& prompts,
                                   const NamedTensors& head) {
  Rows x = Embed(p, c, image);
  size_t carried = 0;
  for (int i = 0; i < c.layers; ++i) {
    if (!prompts[i].empty()) {
      Rows spliced = {x[0]};
      spliced.insert(spliced.end(), prompts[i].begin(), prompts[i].end());
      spliced.insert(spliced.end(), x.begin() + 1 + carried, x.end());
      x = spliced;
      carried = prompts[i].size();
    }
    x = Block(p, c, i, x);
  }
  Rows cls = LayerNorm({x[0]}, p.at("norm.gain"), p.at("norm.bias"), c.ln_eps);
  return Linear(cls, head.at("head.weight"), head.at("head.bias"))[0];
}

}  // namespace pfl::naive

#endif  // PFL_TESTS_SUPPORT_NAIVE_VIT_H_
