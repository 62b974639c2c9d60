// include/cfrp/tensor.h

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

#ifndef CFRP_TENSOR_H_
#define CFRP_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cfrp {

using Real = double;
using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Eigen picks its vectorized code path from
/// the buffer address, so a fixed alignment keeps results bit-reproducible.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align> &) {}
  T *allocate(std::size_t n) {
    return static_cast<T *>(::operator new(n * sizeof(T), std::align_val_t{Align}));
  }
  void deallocate(T *p, std::size_t) { ::operator delete(p, std::align_val_t{Align}); }
  bool operator==(const AlignedAllocator &) const { return true; }
};

using RealStorage = std::vector<Real, AlignedAllocator<Real>>;

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t NumElements(const Shape &shape);
std::string ShapeToString(const Shape &shape);

/// Dense row-major array of Reals. A rank-0 tensor (empty shape) is a scalar
/// holding one value. Matrix views treat rank-1 tensors as a single row.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor Scalar(Real value);
  static Tensor Vector(std::vector<Real> values);
  static Tensor FromRows(std::initializer_list<std::initializer_list<Real>> rows);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return values_.empty(); }

  // Matrix interpretation: rank 2 -> (dim0, dim1), rank 1 -> (1, dim0),
  // rank 0 -> (1, 1).
  std::size_t rows() const;
  std::size_t cols() const;

  Real *data() { return values_.data(); }
  const Real *data() const { return values_.data(); }
  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }

  Real &operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }
  Real &operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// The single value of a size-1 tensor.
  Real item() const;

  MatrixMap matrix() { return MatrixMap(data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data(), rows(), cols()); }

  void Fill(Real value);
  Tensor Reshaped(Shape shape) const;
  /// Copy of rows [begin, begin + count) of a rank-2 tensor.
  Tensor RowRange(std::size_t begin, std::size_t count) const;

  bool AllFinite() const;

  /// Exact equality of shape and every value bit pattern.
  bool BitwiseEquals(const Tensor &other) const;

 private:
  Shape shape_;
  RealStorage values_;
};

}  // namespace cfrp

#endif  // CFRP_TENSOR_H_
