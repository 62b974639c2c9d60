// src/tensor.cc

// Copyright 2026  The CFRP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "cfrp/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "cfrp/error.h"

namespace cfrp {

std::size_t NumElements(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill)
    : shape_(std::move(shape)), values_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (NumElements(shape_) != values_.size())
    throw DimensionError("tensor shape " + ShapeToString(shape_) + " holds " +
                         std::to_string(NumElements(shape_)) + " values, got " +
                         std::to_string(values_.size()));
}

Tensor Tensor::Scalar(Real value) { return Tensor(Shape{}, std::vector<Real>{value}); }

Tensor Tensor::Vector(std::vector<Real> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::FromRows(std::initializer_list<std::initializer_list<Real>> rows) {
  std::size_t n_rows = rows.size();
  std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  std::vector<Real> values;
  values.reserve(n_rows * n_cols);
  for (const auto &row : rows) {
    if (row.size() != n_cols) throw DimensionError("FromRows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{n_rows, n_cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() <= 1) return 1;
  throw DimensionError("rows(): tensor of rank " + std::to_string(shape_.size()));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  if (shape_.empty()) return 1;
  throw DimensionError("cols(): tensor of rank " + std::to_string(shape_.size()));
}

Real Tensor::item() const {
  if (values_.size() != 1)
    throw DimensionError("item() on tensor of shape " + ShapeToString(shape_));
  return values_[0];
}

void Tensor::Fill(Real value) { std::fill(values_.begin(), values_.end(), value); }

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != values_.size())
    throw DimensionError("cannot reshape " + ShapeToString(shape_) + " to " +
                         ShapeToString(shape));
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

Tensor Tensor::RowRange(std::size_t begin, std::size_t count) const {
  if (rank() != 2 || begin + count > shape_[0])
    throw DimensionError("RowRange [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") of " + ShapeToString(shape_));
  std::size_t c = shape_[1];
  std::vector<Real> out(values_.begin() + begin * c,
                        values_.begin() + (begin + count) * c);
  return Tensor(Shape{count, c}, std::move(out));
}

bool Tensor::AllFinite() const {
  for (Real v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::BitwiseEquals(const Tensor &other) const {
  if (shape_ != other.shape_) return false;
  if (values_.empty()) return true;
  return std::memcmp(values_.data(), other.values_.data(),
                     values_.size() * sizeof(Real)) == 0;
}

}  // namespace cfrp
