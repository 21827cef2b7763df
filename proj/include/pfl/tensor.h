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

#ifndef PFL_TENSOR_H_
#define PFL_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pfl {

using Shape = std::vector<size_t>;

size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major array of doubles. Rank 0 holds a single scalar.
// Zero extents are allowed so that empty prompt blocks stay representable.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  // 2-D tensor from nested rows; all rows must have equal length.
  static Tensor FromRows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t axis) const;
  size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  double& at(size_t row, size_t col) { return data_[row * shape_.back() + col]; }
  double at(size_t row, size_t col) const {
    return data_[row * shape_.back() + col];
  }

  // Value of a one-element tensor.
  double item() const;

  Tensor Reshaped(Shape shape) const;
  // Rows [begin, end) along axis 0.
  Tensor Slice(size_t begin, size_t end) const;
  // Sub-tensor at index `i` along axis 0 (rank drops by one).
  Tensor Index(size_t i) const;

  bool AllFinite() const;
  void Fill(double value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Concatenates rank-r tensors along axis 0; trailing extents must agree.
Tensor Concat(std::span<const Tensor> parts);
// Stacks equally shaped tensors along a new leading axis.
Tensor Stack(std::span<const Tensor> parts);

double MaxAbsDiff(const Tensor& a, const Tensor& b);

}  // namespace pfl

#endif  // PFL_TENSOR_H_
