// Copyright 2026 The NanoQuant Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NANOQUANT_DENSE_HPP
#define NANOQUANT_DENSE_HPP

#include <cstddef>
#include <vector>

#include "nanoquant/errors.hpp"

namespace nanoquant {

// Row-major dense matrix of 64-bit reals. The universal numeric carrier for
// weights, calibration batches, targets and solver state.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  static DenseMatrix from_values(std::size_t rows, std::size_t cols,
                                 std::vector<double> values) {
    if (values.size() != rows * cols) {
      throw DimensionMismatch("value count does not equal rows*cols");
    }
    DenseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.values_ = std::move(values);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double* row(std::size_t i) { return values_.data() + i * cols_; }
  const double* row(std::size_t i) const { return values_.data() + i * cols_; }
  const std::vector<double>& values() const { return values_; }

  bool is_finite() const;
  bool is_zero() const;
  double frobenius_norm() const;
  double squared_frobenius_norm() const;

  DenseMatrix transposed() const;
  void scale(double factor);

  bool operator==(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && values_ == other.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// C = A * B
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// C = A^T * B
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);
// A^T A, symmetric by construction.
DenseMatrix gram(const DenseMatrix& a);
DenseMatrix identity(std::size_t n);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scaled(const DenseMatrix& a, double factor);

double dot(const DenseMatrix& a, const DenseMatrix& b);
double relative_frobenius_error(const DenseMatrix& reference, const DenseMatrix& approx);

}  // namespace nanoquant

#endif  // NANOQUANT_DENSE_HPP
