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

// Test-only oracles, independent of the library's computation paths.

#ifndef NANOQUANT_TESTS_TEST_SUPPORT_HPP
#define NANOQUANT_TESTS_TEST_SUPPORT_HPP

#include <Eigen/Dense>
#include <vector>

#include "nanoquant/dense.hpp"
#include "nanoquant/rng.hpp"

namespace nqtest {

using nanoquant::DenseMatrix;
using nanoquant::Rng;

inline Eigen::MatrixXd to_eigen(const DenseMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<long>(i), static_cast<long>(j)) = m(i, j);
  }
  return e;
}

inline DenseMatrix from_eigen(const Eigen::MatrixXd& e) {
  DenseMatrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (long i = 0; i < e.rows(); ++i) {
    for (long j = 0; j < e.cols(); ++j) m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = e(i, j);
  }
  return m;
}

// full-SVD oracle for dominant singular values
inline double oracle_sigma_max(const DenseMatrix& m) {
  return to_eigen(m).jacobiSvd().singularValues()(0);
}

inline DenseMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

inline DenseMatrix random_sign_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.sign();
  return m;
}

// rank-1 in-model-class target: (s1 .* u)(s2 .* v)^T with sign vectors and
// positive scales
inline DenseMatrix in_class_target(Rng& rng, std::size_t n, std::size_t m) {
  DenseMatrix w(n, m);
  std::vector<double> a(n), b(m);
  for (auto& x : a) x = rng.sign() * rng.uniform(0.5, 2.0);
  for (auto& x : b) x = rng.sign() * rng.uniform(0.5, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) w(i, j) = a[i] * b[j];
  }
  return w;
}

}  // namespace nqtest

#endif  // NANOQUANT_TESTS_TEST_SUPPORT_HPP
