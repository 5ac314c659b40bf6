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

#include "nanoquant/admm.hpp"

#include <algorithm>
#include <cmath>

#include "nanoquant/linalg.hpp"

namespace nanoquant {

DenseMatrix svid(const DenseMatrix& p) {
  if (!p.is_finite()) throw NonFiniteInput("svid");
  if (p.is_zero()) throw ZeroMatrix("svid");

  DenseMatrix abs_p = p;
  for (std::size_t i = 0; i < abs_p.size(); ++i) {
    abs_p.data()[i] = std::abs(abs_p.data()[i]);
  }
  const SingularPair pair = top_singular_pair(abs_p, 300, 1e-12);
  const double root = std::sqrt(pair.sigma);

  DenseMatrix z(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const double ai = root * pair.left[i];
    const double* prow = p.row(i);
    double* zrow = z.row(i);
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double mag = ai * root * pair.right[j];
      zrow[j] = prow[j] < 0.0 ? -mag : mag;  // sign(0) = +1
    }
  }
  return z;
}

DenseMatrix admm_factor_solve(const DenseMatrix& target, const DenseMatrix& fixed,
                              const DenseMatrix& z, const DenseMatrix& l,
                              double rho, double ridge) {
  const std::size_t r = fixed.cols();
  if (z.cols() != r || l.cols() != r) {
    throw DimensionMismatch("admm_factor_solve: proxy rank mismatch");
  }
  if (z.rows() != target.rows() || l.rows() != target.rows()) {
    throw DimensionMismatch("admm_factor_solve: proxy rows mismatch");
  }
  if (fixed.rows() != target.cols()) {
    throw DimensionMismatch("admm_factor_solve: rows(fixed) != cols(target)");
  }

  DenseMatrix a = gram(fixed);
  for (std::size_t i = 0; i < r; ++i) a(i, i) += rho + ridge;

  // rhs = fixed^T target^T + rho (Z - L)^T, assembled transposed (r x n)
  DenseMatrix rhs(r, target.rows());
  for (std::size_t i = 0; i < target.rows(); ++i) {
    const double* trow = target.row(i);
    for (std::size_t k = 0; k < fixed.rows(); ++k) {
      const double t = trow[k];
      if (t == 0.0) continue;
      const double* frow = fixed.row(k);
      for (std::size_t c = 0; c < r; ++c) rhs(c, i) += t * frow[c];
    }
    const double* zrow = z.row(i);
    const double* lrow = l.row(i);
    for (std::size_t c = 0; c < r; ++c) rhs(c, i) += rho * (zrow[c] - lrow[c]);
  }
  return cholesky_solve(a, rhs).transposed();
}

double augmented_lagrangian(const AdmmState& state, const DenseMatrix& target,
                            double ridge) {
  if (state.u.rows() != target.rows() || state.v.rows() != target.cols()) {
    throw DimensionMismatch("augmented_lagrangian: state does not match target");
  }
  const DenseMatrix approx = matmul(state.u, state.v.transposed());
  double value = 0.5 * subtract(target, approx).squared_frobenius_norm();
  value += 0.5 * ridge *
           (state.u.squared_frobenius_norm() + state.v.squared_frobenius_norm());
  const DenseMatrix ru = subtract(state.u, state.z_u);
  const DenseMatrix rv = subtract(state.v, state.z_v);
  value += state.rho * dot(state.l_u, ru) + 0.5 * state.rho * ru.squared_frobenius_norm();
  value += state.rho * dot(state.l_v, rv) + 0.5 * state.rho * rv.squared_frobenius_norm();
  return value;
}

double monotone_rho(const DenseMatrix& target) {
  return 16.0 * std::max(spectral_norm_estimate(target), 1e-12);
}

namespace {

double rel_residual(const DenseMatrix& x, const DenseMatrix& z) {
  const double nx = x.frobenius_norm();
  const double r = subtract(x, z).frobenius_norm();
  return r / std::max(nx, 1e-300);
}

// Equalize ||U||_F and ||V||_F, folding the rescale into proxies and duals so
// the consensus variables stay consistent. Idempotent at the balanced state.
void rebalance(AdmmState& s) {
  const double nu = s.u.frobenius_norm();
  const double nv = s.v.frobenius_norm();
  if (nu <= 0.0 || nv <= 0.0) return;
  const double c = std::sqrt(nv / nu);
  s.u.scale(c);
  s.z_u.scale(c);
  s.l_u.scale(c);
  s.v.scale(1.0 / c);
  s.z_v.scale(1.0 / c);
  s.l_v.scale(1.0 / c);
}

}  // namespace

AdmmResult admm_factorize(const DenseMatrix& target, const AdmmConfig& config) {
  if (target.is_zero()) throw ZeroMatrix("admm_factorize: target");
  if (!target.is_finite()) throw NonFiniteInput("admm_factorize: target");
  if (config.rank == 0) throw InvalidRank("admm_factorize: rank must be >= 1");
  if (config.rank > std::min(target.rows(), target.cols())) {
    throw RankTooLarge("admm_factorize: rank exceeds min(rows, cols)");
  }
  if (config.max_iters < 1) {
    throw Error(ErrorKind::kValidation, "admm_factorize: max_iters must be >= 1");
  }

  double rho_start = config.rho_start;
  double rho_end = config.rho_end;
  if (rho_start <= 0.0 && rho_end <= 0.0) {
    const double spectral = std::max(spectral_norm_estimate(target), 1e-12);
    rho_start = 0.1 * spectral;
    rho_end = 10.0 * spectral;
  } else if (rho_start <= 0.0 || rho_end < rho_start) {
    throw Error(ErrorKind::kValidation, "admm_factorize: need rho_end >= rho_start > 0");
  }

  AdmmState s;
  truncated_svd_factors(target, config.rank, &s.u, &s.v);
  s.z_u = svid(s.u);
  s.z_v = svid(s.v);
  s.l_u = DenseMatrix(s.u.rows(), s.u.cols());
  s.l_v = DenseMatrix(s.v.rows(), s.v.cols());
  s.rho = rho_start;
  s.lagrangian_trace.push_back(augmented_lagrangian(s, target, config.ridge));

  const int denom = std::max(config.max_iters - 1, 1);
  for (int k = 0; k < config.max_iters; ++k) {
    s.primal_residual =
        std::max(rel_residual(s.u, s.z_u), rel_residual(s.v, s.z_v));
    if (s.primal_residual < config.tol) {
      s.converged = true;
      break;
    }

    const double rho =
        rho_start + (rho_end - rho_start) * (static_cast<double>(k) / denom);
    if (rho != s.rho) {
      // duals are stored scaled (Lambda = Y / rho); keep Y continuous
      const double rescale = s.rho / rho;
      s.l_u.scale(rescale);
      s.l_v.scale(rescale);
      s.rho = rho;
    }

    rebalance(s);
    s.u = admm_factor_solve(target, s.v, s.z_u, s.l_u, s.rho, config.ridge);
    s.v = admm_factor_solve(target.transposed(), s.u, s.z_v, s.l_v, s.rho,
                            config.ridge);
    s.z_u = svid(add(s.u, s.l_u));
    s.z_v = svid(add(s.v, s.l_v));
    s.l_u = add(s.l_u, subtract(s.u, s.z_u));
    s.l_v = add(s.l_v, subtract(s.v, s.z_v));

    s.iteration = static_cast<std::size_t>(k) + 1;
    s.lagrangian_trace.push_back(augmented_lagrangian(s, target, config.ridge));
  }
  if (!s.converged) {
    s.primal_residual =
        std::max(rel_residual(s.u, s.z_u), rel_residual(s.v, s.z_v));
    s.converged = s.primal_residual < config.tol;
  }

  AdmmResult result;
  result.consensus_u = add(s.u, s.l_u);
  result.consensus_v = add(s.v, s.l_v);
  result.state = std::move(s);
  return result;
}

}  // namespace nanoquant
