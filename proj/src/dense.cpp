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

#include "nanoquant/dense.hpp"

#include <cmath>
#include <limits>

namespace nanoquant {

bool DenseMatrix::is_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool DenseMatrix::is_zero() const {
  for (double v : values_) {
    if (v != 0.0) return false;
  }
  return true;
}

double DenseMatrix::squared_frobenius_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

double DenseMatrix::frobenius_norm() const {
  return std::sqrt(squared_frobenius_norm());
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      t(j, i) = (*this)(i, j);
    }
  }
  return t;
}

void DenseMatrix::scale(double factor) {
  for (double& v : values_) v *= factor;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: cols(A) != rows(B)");
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) {
        ci[j] += aik * bk[j];
      }
    }
  }
  return c;
}

DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionMismatch("matmul_at_b: rows(A) != rows(B)");
  }
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) {
        ci[j] += aki * bk[j];
      }
    }
  }
  return c;
}

DenseMatrix gram(const DenseMatrix& a) { return matmul_at_b(a, a); }

DenseMatrix identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("add: shape mismatch");
  }
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("subtract: shape mismatch");
  }
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

DenseMatrix scaled(const DenseMatrix& a, double factor) {
  DenseMatrix c = a;
  c.scale(factor);
  return c;
}

double dot(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("dot: shape mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

double relative_frobenius_error(const DenseMatrix& reference, const DenseMatrix& approx) {
  const double denom = reference.frobenius_norm();
  const double num = subtract(reference, approx).frobenius_norm();
  if (denom == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / denom;
}

}  // namespace nanoquant
