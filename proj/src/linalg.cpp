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

#include "nanoquant/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace nanoquant {

namespace {

// Lower-triangular in-place LL^T. Returns false on a non-positive pivot.
bool try_cholesky(DenseMatrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  return true;
}

// Solves L L^T X = B given the factor computed above.
DenseMatrix cholesky_backsolve(const DenseMatrix& l, const DenseMatrix& b) {
  const std::size_t n = l.rows();
  DenseMatrix x = b;
  // forward: L y = b
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, j);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, j);
      x(i, j) = s / l(i, i);
    }
    // backward: L^T x = y
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, j);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, j);
      x(ii, j) = s / l(ii, ii);
    }
  }
  return x;
}

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void normalize(std::vector<double>& v) {
  const double n = vec_norm(v);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}

// w = M v
std::vector<double> mat_vec(const DenseMatrix& m, const std::vector<double>& v) {
  std::vector<double> w(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += row[j] * v[j];
    w[i] = s;
  }
  return w;
}

// w = M^T v
std::vector<double> mat_t_vec(const DenseMatrix& m, const std::vector<double>& v) {
  std::vector<double> w(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    const double vi = v[i];
    if (vi == 0.0) continue;
    for (std::size_t j = 0; j < m.cols(); ++j) w[j] += row[j] * vi;
  }
  return w;
}

SingularPair power_iterate(const DenseMatrix& m, std::vector<double> v0,
                           int max_iters, double tol) {
  SingularPair out;
  std::vector<double> v = std::move(v0);
  normalize(v);
  double sigma_prev = -1.0;
  double sigma = 0.0;
  std::vector<double> mv;
  for (int it = 0; it < max_iters; ++it) {
    mv = mat_vec(m, v);
    sigma = vec_norm(mv);
    if (sigma == 0.0) break;
    std::vector<double> w = mat_t_vec(m, mv);
    normalize(w);
    v = std::move(w);
    if (sigma_prev >= 0.0 &&
        std::abs(sigma - sigma_prev) <= tol * std::max(sigma, 1e-300)) {
      out.converged = true;
      sigma_prev = sigma;
      break;
    }
    sigma_prev = sigma;
  }
  mv = mat_vec(m, v);
  sigma = vec_norm(mv);
  out.sigma = sigma;
  out.right = v;
  if (sigma > 0.0) {
    for (double& x : mv) x /= sigma;
    out.left = std::move(mv);
  } else {
    out.left.assign(m.rows(), 0.0);
    out.converged = false;
  }
  return out;
}

}  // namespace

DenseMatrix cholesky_solve(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != a.cols()) throw DimensionMismatch("cholesky_solve: A is not square");
  if (a.rows() != b.rows()) throw DimensionMismatch("cholesky_solve: rows(B) != rows(A)");
  if (!b.is_finite() || !a.is_finite()) throw NonFiniteInput("cholesky_solve");

  const std::size_t n = a.rows();
  double max_abs = 0.0, max_asym = 0.0, diag_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diag_sum += a(i, i);
    for (std::size_t j = 0; j < n; ++j) {
      max_abs = std::max(max_abs, std::abs(a(i, j)));
      if (j > i) max_asym = std::max(max_asym, std::abs(a(i, j) - a(j, i)));
    }
  }
  if (max_asym > 1e-9 * std::max(max_abs, 1e-300)) {
    throw NotSymmetric();
  }
  const double mean_diag = n > 0 ? diag_sum / static_cast<double>(n) : 0.0;

  static constexpr double kJitter[] = {0.0, 1e-10, 1e-7, 1e-4};
  for (double delta : kJitter) {
    DenseMatrix l = a;
    if (delta > 0.0) {
      const double add = delta * std::abs(mean_diag);
      if (add == 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) l(i, i) += add;
    }
    if (!try_cholesky(l)) continue;
    DenseMatrix x = cholesky_backsolve(l, b);
    // one refinement pass against the original A
    DenseMatrix residual = subtract(b, matmul(a, x));
    x = add(x, cholesky_backsolve(l, residual));
    if (!x.is_finite()) continue;
    return x;
  }
  throw NotPositiveDefinite("cholesky_solve: factorization failed after jitter escalation");
}

SingularPair top_singular_pair(const DenseMatrix& m, int max_iters, double tol) {
  if (m.is_zero()) throw ZeroMatrix("top_singular_pair");

  // column-norm start vector: nonnegative, never orthogonal to the dominant
  // direction of a nonnegative matrix
  std::vector<double> v0(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) v0[j] += row[j] * row[j];
  }
  for (double& x : v0) x = std::sqrt(x);

  SingularPair best = power_iterate(m, v0, max_iters, tol);
  if (best.sigma == 0.0) {
    // start vector fell in the null space; probe basis directions
    for (std::size_t j = 0; j < m.cols() && best.sigma == 0.0; ++j) {
      std::vector<double> e(m.cols(), 0.0);
      e[j] = 1.0;
      best = power_iterate(m, e, max_iters, tol);
    }
  }

  // deterministic sign convention: the largest-magnitude entry of the right
  // vector is nonnegative
  std::size_t arg = 0;
  for (std::size_t j = 1; j < best.right.size(); ++j) {
    if (std::abs(best.right[j]) > std::abs(best.right[arg])) arg = j;
  }
  if (!best.right.empty() && best.right[arg] < 0.0) {
    for (double& x : best.right) x = -x;
    for (double& x : best.left) x = -x;
  }
  return best;
}

double spectral_norm_estimate(const DenseMatrix& m, int iters) {
  if (m.empty() || m.is_zero()) return 0.0;
  return top_singular_pair(m, iters, 1e-14).sigma;
}

void truncated_svd_factors(const DenseMatrix& m, std::size_t rank,
                           DenseMatrix* u_out, DenseMatrix* v_out) {
  const std::size_t n = m.rows();
  const std::size_t mm = m.cols();
  DenseMatrix u(n, rank), v(mm, rank);
  DenseMatrix residual = m;
  const double scale = m.frobenius_norm();
  for (std::size_t k = 0; k < rank; ++k) {
    if (residual.frobenius_norm() <= 1e-14 * scale) break;  // rank exhausted
    SingularPair p = top_singular_pair(residual, 1000, 1e-13);
    const double root = std::sqrt(p.sigma);
    for (std::size_t i = 0; i < n; ++i) u(i, k) = root * p.left[i];
    for (std::size_t j = 0; j < mm; ++j) v(j, k) = root * p.right[j];
    for (std::size_t i = 0; i < n; ++i) {
      double* row = residual.row(i);
      const double ui = p.sigma * p.left[i];
      for (std::size_t j = 0; j < mm; ++j) row[j] -= ui * p.right[j];
    }
  }
  *u_out = std::move(u);
  *v_out = std::move(v);
}

}  // namespace nanoquant
