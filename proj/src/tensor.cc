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

#include "pfl/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pfl/errors.h"

namespace pfl {

size_t NumElements(const Shape& shape) {
  size_t n = 1;
  for (size_t e : shape) n *= e;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (NumElements(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + ShapeString(shape_) + " needs " +
                         std::to_string(NumElements(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in FromRows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

size_t Tensor::dim(size_t axis) const {
  if (axis >= shape_.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for " +
                     ShapeString(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + ShapeString(shape_));
  }
  return data_[0];
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + ShapeString(shape_) + " to " +
                         ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::Slice(size_t begin, size_t end) const {
  if (rank() == 0 || begin > end || end > shape_[0]) {
    throw IndexError("slice [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + ShapeString(shape_));
  }
  const size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s),
                std::vector<double>(data_.begin() + begin * stride,
                                    data_.begin() + end * stride));
}

Tensor Tensor::Index(size_t i) const {
  Tensor t = Slice(i, i + 1);
  Shape s(shape_.begin() + 1, shape_.end());
  return t.Reshaped(std::move(s));
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("Concat of zero tensors");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw DimensionError("Concat of scalars");
  size_t rows = 0;
  std::vector<double> data;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("Concat trailing extents differ: " +
                           ShapeString(shape) + " vs " +
                           ShapeString(p.shape()));
    }
    rows += p.shape()[0];
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  shape[0] = rows;
  return Tensor(std::move(shape), std::move(data));
}

Tensor Stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("Stack of zero tensors");
  Shape shape = parts[0].shape();
  std::vector<double> data;
  for (const Tensor& p : parts) {
    if (p.shape() != shape) {
      throw DimensionError("Stack shapes differ: " + ShapeString(shape) +
                           " vs " + ShapeString(p.shape()));
    }
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  shape.insert(shape.begin(), parts.size());
  return Tensor(std::move(shape), std::move(data));
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("MaxAbsDiff shapes " + ShapeString(a.shape()) +
                         " vs " + ShapeString(b.shape()));
  }
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace pfl
