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

#include "pfl/ops.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "pfl/errors.h"

namespace pfl {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

void RequireSameShape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " +
                         ShapeString(a.shape()) + " and " +
                         ShapeString(b.shape()) + " differ");
  }
}

void Require2D(const char* op, Var a) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-D tensor, got " +
                         ShapeString(a.shape()));
  }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// c[m x n] += a[m x k] * b[k x n]
void GemmNN(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
}

// c[m x n] += a[m x k] * b[n x k]^T
void GemmNT(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
}

// c[m x n] += a[k x m]^T * b[k x n]
void GemmTN(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n) {
  MutMap(c, m, n).noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, k, n);
}

template <typename F>
Tensor Map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

Var Add(Var a, Var b) {
  RequireSameShape("Add", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.graph().Record(std::move(out), {a, b},
                          [a, b](Graph& g, const Tensor& dy) {
                            for (Var in : {a, b}) {
                              if (!g.requires_grad(in)) continue;
                              Tensor& d = g.grad_buffer(in);
                              for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
                            }
                          });
}

Var Sub(Var a, Var b) {
  RequireSameShape("Sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.graph().Record(std::move(out), {a, b},
                          [a, b](Graph& g, const Tensor& dy) {
                            if (g.requires_grad(a)) {
                              Tensor& d = g.grad_buffer(a);
                              for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
                            }
                            if (g.requires_grad(b)) {
                              Tensor& d = g.grad_buffer(b);
                              for (size_t i = 0; i < dy.size(); ++i) d[i] -= dy[i];
                            }
                          });
}

Var Mul(Var a, Var b) {
  RequireSameShape("Mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.graph().Record(std::move(out), {a, b},
                          [a, b](Graph& g, const Tensor& dy) {
                            const Tensor& av = g.value(a);
                            const Tensor& bv = g.value(b);
                            if (g.requires_grad(a)) {
                              Tensor& d = g.grad_buffer(a);
                              for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * bv[i];
                            }
                            if (g.requires_grad(b)) {
                              Tensor& d = g.grad_buffer(b);
                              for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * av[i];
                            }
                          });
}

Var Scale(Var a, double c) {
  Tensor out = Map(a.value(), [c](double v) { return c * v; });
  return a.graph().Record(std::move(out), {a},
                          [a, c](Graph& g, const Tensor& dy) {
                            Tensor& d = g.grad_buffer(a);
                            for (size_t i = 0; i < dy.size(); ++i) d[i] += c * dy[i];
                          });
}

Var AddScalar(Var a, double c) {
  Tensor out = Map(a.value(), [c](double v) { return v + c; });
  return a.graph().Record(std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    Tensor& d = g.grad_buffer(a);
    for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
  });
}

Var Exp(Var a) {
  Tensor out = Map(a.value(), [](double v) { return std::exp(v); });
  return a.graph().Record(std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    const Tensor& x = g.value(a);
    Tensor& d = g.grad_buffer(a);
    for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * std::exp(x[i]);
  });
}

Var Gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  const bool need_slope = a.graph().requires_grad(a);
  std::vector<double> slope(need_slope ? x.size() : 0);
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    out[i] = v * cdf;
    if (need_slope) slope[i] = cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
  }
  return a.graph().Record(std::move(out), {a},
                          [a, slope = std::move(slope)](Graph& g, const Tensor& dy) {
                            Tensor& d = g.grad_buffer(a);
                            for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * slope[i];
                          });
}

Var Sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().Record(Tensor::Scalar(s), {a}, [a](Graph& g, const Tensor& dy) {
    Tensor& d = g.grad_buffer(a);
    for (size_t i = 0; i < d.size(); ++i) d[i] += dy[0];
  });
}

Var MatMul(Var a, Var b) {
  Require2D("MatMul", a);
  Require2D("MatMul", b);
  const size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("MatMul: inner extents differ, " +
                         ShapeString(a.shape()) + " x " +
                         ShapeString(b.shape()));
  }
  Tensor out({m, n}, 0.0);
  GemmNN(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.graph().Record(
      std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& dy) {
        if (g.requires_grad(a)) {
          GemmNT(dy.data(), g.value(b).data(), g.grad_buffer(a).data(), m, n, k);
        }
        if (g.requires_grad(b)) {
          GemmTN(g.value(a).data(), dy.data(), g.grad_buffer(b).data(), k, m, n);
        }
      });
}

Var Linear(Var x, Var w, Var b) {
  Require2D("Linear", x);
  Require2D("Linear", w);
  const size_t t = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[1];
  if (w.shape()[0] != in || b.value().size() != out_dim) {
    throw DimensionError("Linear: input " + ShapeString(x.shape()) +
                         ", weight " + ShapeString(w.shape()) + ", bias " +
                         ShapeString(b.shape()));
  }
  Tensor out({t, out_dim});
  const Tensor& bv = b.value();
  for (size_t i = 0; i < t; ++i) {
    std::copy(bv.data(), bv.data() + out_dim, out.data() + i * out_dim);
  }
  GemmNN(x.value().data(), w.value().data(), out.data(), t, in, out_dim);
  return x.graph().Record(
      std::move(out), {x, w, b},
      [x, w, b, t, in, out_dim](Graph& g, const Tensor& dy) {
        if (g.requires_grad(x)) {
          GemmNT(dy.data(), g.value(w).data(), g.grad_buffer(x).data(), t,
                 out_dim, in);
        }
        if (g.requires_grad(w)) {
          GemmTN(g.value(x).data(), dy.data(), g.grad_buffer(w).data(), in, t,
                 out_dim);
        }
        if (g.requires_grad(b)) {
          Tensor& db = g.grad_buffer(b);
          for (size_t i = 0; i < t; ++i) {
            for (size_t j = 0; j < out_dim; ++j) db[j] += dy[i * out_dim + j];
          }
        }
      });
}

Var Transpose(Var a) {
  Require2D("Transpose", a);
  const size_t r = a.shape()[0], c = a.shape()[1];
  const Tensor& av = a.value();
  Tensor out({c, r});
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return a.graph().Record(std::move(out), {a}, [a, r, c](Graph& g, const Tensor& dy) {
    Tensor& d = g.grad_buffer(a);
    for (size_t i = 0; i < r; ++i) {
      for (size_t j = 0; j < c; ++j) d[i * c + j] += dy[j * r + i];
    }
  });
}

Var Reshape(Var a, Shape shape) {
  Tensor out = a.value().Reshaped(std::move(shape));
  return a.graph().Record(std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    Tensor& d = g.grad_buffer(a);
    for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
  });
}

Var LayerNorm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("LayerNorm on a scalar");
  const size_t d = xv.shape().back();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("LayerNorm: width " + std::to_string(d) + ", gain " +
                         ShapeString(gain.shape()) + ", bias " +
                         ShapeString(bias.shape()));
  }
  if (!(eps > 0.0)) throw DomainError("LayerNorm: eps must be positive");
  const size_t rows = d ? xv.size() / d : 0;
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> rstd(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return x.graph().Record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, d, rows, xhat = std::move(xhat),
       rstd = std::move(rstd)](Graph& g, const Tensor& dy) {
        const Tensor& gv = g.value(gain);
        if (g.requires_grad(gain)) {
          Tensor& dg = g.grad_buffer(gain);
          for (size_t i = 0; i < dy.size(); ++i) dg[i % d] += dy[i] * xhat[i];
        }
        if (g.requires_grad(bias)) {
          Tensor& db = g.grad_buffer(bias);
          for (size_t i = 0; i < dy.size(); ++i) db[i % d] += dy[i];
        }
        if (g.requires_grad(x)) {
          Tensor& dx = g.grad_buffer(x);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (size_t j = 0; j < d; ++j) {
              const double dh = dy[r * d + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (size_t j = 0; j < d; ++j) {
              const double dh = dy[r * d + j] * gv[j];
              dx[r * d + j] +=
                  rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

Var RowSlice(Var x, size_t begin, size_t end) {
  Require2D("RowSlice", x);
  const size_t c = x.shape()[1];
  Tensor out = x.value().Slice(begin, end);
  return x.graph().Record(std::move(out), {x},
                          [x, begin, end, c](Graph& g, const Tensor& dy) {
                            Tensor& d = g.grad_buffer(x);
                            double* dst = d.data() + begin * c;
                            for (size_t i = 0; i < (end - begin) * c; ++i) dst[i] += dy[i];
                          });
}

Var ConcatRows(std::span<const Var> blocks) {
  if (blocks.empty()) throw ArgumentError("ConcatRows of zero blocks");
  for (Var b : blocks) Require2D("ConcatRows", b);
  const size_t c = blocks[0].shape()[1];
  std::vector<Tensor> parts;
  parts.reserve(blocks.size());
  for (Var b : blocks) {
    if (b.shape()[1] != c) {
      throw DimensionError("ConcatRows: widths " + std::to_string(c) + " and " +
                           std::to_string(b.shape()[1]));
    }
    parts.push_back(b.value());
  }
  std::vector<Var> ins(blocks.begin(), blocks.end());
  return blocks[0].graph().Record(
      Concat(parts), blocks, [ins, c](Graph& g, const Tensor& dy) {
        size_t offset = 0;
        for (Var b : ins) {
          const size_t n = g.value(b).size();
          if (g.requires_grad(b)) {
            Tensor& d = g.grad_buffer(b);
            for (size_t i = 0; i < n; ++i) d[i] += dy[offset + i];
          }
          offset += n;
        }
        (void)c;
      });
}

Var ScaleRows(Var x, std::span<const double> scale) {
  Require2D("ScaleRows", x);
  const size_t r = x.shape()[0], c = x.shape()[1];
  if (scale.size() != r) {
    throw DimensionError("ScaleRows: " + std::to_string(scale.size()) +
                         " scales for " + ShapeString(x.shape()));
  }
  Tensor out = x.value();
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) out[i * c + j] *= scale[i];
  }
  std::vector<double> s(scale.begin(), scale.end());
  return x.graph().Record(std::move(out), {x},
                          [x, s = std::move(s), c](Graph& g, const Tensor& dy) {
                            Tensor& d = g.grad_buffer(x);
                            for (size_t i = 0; i < s.size(); ++i) {
                              for (size_t j = 0; j < c; ++j) d[i * c + j] += s[i] * dy[i * c + j];
                            }
                          });
}

Var SelfAttention(Var qkv, int heads) {
  Require2D("SelfAttention", qkv);
  const size_t t = qkv.shape()[0];
  const size_t width3 = qkv.shape()[1];
  if (heads <= 0 || width3 % (3 * static_cast<size_t>(heads)) != 0) {
    throw DimensionError("SelfAttention: width " + std::to_string(width3) +
                         " not divisible by 3 * heads");
  }
  const size_t d = width3 / 3;
  const size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double* x = qkv.value().data();
  Tensor out({t, d}, 0.0);
  // probs[h][i][j]
  std::vector<double> probs(static_cast<size_t>(heads) * t * t);
  std::vector<double> row(t);
  for (int h = 0; h < heads; ++h) {
    const size_t qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
    double* p = probs.data() + h * t * t;
    for (size_t i = 0; i < t; ++i) {
      const double* qi = x + i * width3 + qo;
      double mx = -INFINITY;
      for (size_t j = 0; j < t; ++j) {
        const double* kj = x + j * width3 + ko;
        double s = 0.0;
        for (size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (size_t j = 0; j < t; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      double* oi = out.data() + i * d + h * hd;
      for (size_t j = 0; j < t; ++j) {
        const double pij = row[j] / z;
        p[i * t + j] = pij;
        const double* vj = x + j * width3 + vo;
        for (size_t c = 0; c < hd; ++c) oi[c] += pij * vj[c];
      }
    }
  }
  return qkv.graph().Record(
      std::move(out), {qkv},
      [qkv, heads, t, d, hd, scale, probs = std::move(probs)](Graph& g,
                                                              const Tensor& dy) {
        const size_t width3 = 3 * d;
        const double* x = g.value(qkv).data();
        double* dx = g.grad_buffer(qkv).data();
        std::vector<double> dp(t);
        for (int h = 0; h < heads; ++h) {
          const size_t qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
          const double* p = probs.data() + h * t * t;
          for (size_t i = 0; i < t; ++i) {
            const double* dyi = dy.data() + i * d + h * hd;
            double dot = 0.0;
            for (size_t j = 0; j < t; ++j) {
              const double* vj = x + j * width3 + vo;
              double s = 0.0;
              for (size_t c = 0; c < hd; ++c) s += dyi[c] * vj[c];
              dp[j] = s;
              dot += s * p[i * t + j];
              // dV
              double* dvj = dx + j * width3 + vo;
              const double pij = p[i * t + j];
              for (size_t c = 0; c < hd; ++c) dvj[c] += pij * dyi[c];
            }
            const double* qi = x + i * width3 + qo;
            double* dqi = dx + i * width3 + qo;
            for (size_t j = 0; j < t; ++j) {
              const double ds = p[i * t + j] * (dp[j] - dot) * scale;
              const double* kj = x + j * width3 + ko;
              double* dkj = dx + j * width3 + ko;
              for (size_t c = 0; c < hd; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

Var SoftmaxCrossEntropy(Var logits, int label) {
  const Tensor& lv = logits.value();
  const size_t c = lv.size();
  if (label < 0 || static_cast<size_t>(label) >= c) {
    throw IndexError("label " + std::to_string(label) + " outside [0, " +
                     std::to_string(c) + ")");
  }
  std::vector<double> probs = Softmax(lv.values());
  const double lse = LogSumExp(lv.values());
  const double loss = lse - lv[label];
  return logits.graph().Record(
      Tensor::Scalar(loss), {logits},
      [logits, label, probs = std::move(probs)](Graph& g, const Tensor& dy) {
        Tensor& d = g.grad_buffer(logits);
        for (size_t i = 0; i < probs.size(); ++i) {
          d[i] += dy[0] * (probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
        }
      });
}

Var GaussianLogDensity(Var p, Var mu, Var sigma) {
  RequireSameShape("GaussianLogDensity", p, mu);
  RequireSameShape("GaussianLogDensity", p, sigma);
  const Tensor& pv = p.value();
  const Tensor& mv = mu.value();
  const Tensor& sv = sigma.value();
  double total = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    if (!(sv[i] > 0.0)) {
      throw DomainError("GaussianLogDensity: sigma[" + std::to_string(i) +
                        "] = " + std::to_string(sv[i]) + " is not positive");
    }
    const double z = (pv[i] - mv[i]) / sv[i];
    total += -kHalfLog2Pi - std::log(sv[i]) - 0.5 * z * z;
  }
  return p.graph().Record(
      Tensor::Scalar(total), {p, mu, sigma},
      [p, mu, sigma](Graph& g, const Tensor& dy) {
        const Tensor& pv = g.value(p);
        const Tensor& mv = g.value(mu);
        const Tensor& sv = g.value(sigma);
        const double s = dy[0];
        const bool gp = g.requires_grad(p), gm = g.requires_grad(mu),
                   gs = g.requires_grad(sigma);
        Tensor* dp = gp ? &g.grad_buffer(p) : nullptr;
        Tensor* dm = gm ? &g.grad_buffer(mu) : nullptr;
        Tensor* ds = gs ? &g.grad_buffer(sigma) : nullptr;
        for (size_t i = 0; i < pv.size(); ++i) {
          const double inv = 1.0 / sv[i];
          const double diff = pv[i] - mv[i];
          const double dlp = -diff * inv * inv;
          if (dp) (*dp)[i] += s * dlp;
          if (dm) (*dm)[i] -= s * dlp;
          if (ds) (*ds)[i] += s * (-inv + diff * diff * inv * inv * inv);
        }
      });
}

Var StdNormalLogDensity(Var p) {
  const Tensor& pv = p.value();
  double total = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) total += -kHalfLog2Pi - 0.5 * pv[i] * pv[i];
  return p.graph().Record(Tensor::Scalar(total), {p}, [p](Graph& g, const Tensor& dy) {
    const Tensor& pv = g.value(p);
    Tensor& d = g.grad_buffer(p);
    for (size_t i = 0; i < pv.size(); ++i) d[i] -= dy[0] * pv[i];
  });
}

Var LogSumExp(std::span<const Var> values) {
  if (values.empty()) throw ArgumentError("LogSumExp of an empty list");
  std::vector<double> v;
  v.reserve(values.size());
  for (Var x : values) v.push_back(x.item());
  const double lse = LogSumExp(v);
  std::vector<Var> ins(values.begin(), values.end());
  return values[0].graph().Record(
      Tensor::Scalar(lse), values,
      [ins, v = std::move(v), lse](Graph& g, const Tensor& dy) {
        for (size_t i = 0; i < ins.size(); ++i) {
          if (!g.requires_grad(ins[i])) continue;
          g.grad_buffer(ins[i])[0] += dy[0] * std::exp(v[i] - lse);
        }
      });
}

double LogSumExp(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("LogSumExp of an empty list");
  if (values.size() == 1) return values[0];
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& o : out) o /= z;
  return out;
}

}  // namespace pfl
