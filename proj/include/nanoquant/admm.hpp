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

#ifndef NANOQUANT_ADMM_HPP
#define NANOQUANT_ADMM_HPP

#include <cstdint>
#include <vector>

#include "nanoquant/dense.hpp"

namespace nanoquant {

// Sign-structured rank-1-magnitude projection:
//   Z = sign(P) .* (a b^T),  (sigma, u, v) = top singular pair of |P|,
//   a = sqrt(sigma) u, b = sqrt(sigma) v, sign(0) = +1.
// Exact Euclidean projection onto the SVID image set, since |P| is
// nonnegative and its dominant pair is nonnegative.
DenseMatrix svid(const DenseMatrix& p);

// Minimizer of the factor subproblem
//   min_X 1/2 ||target - X fixed^T||_F^2 + ridge/2 ||X||_F^2
//         + rho/2 ||X - Z + L||_F^2
// via the SPD system (fixed^T fixed + (rho+ridge) I) X^T =
// fixed^T target^T + rho (Z - L)^T.
DenseMatrix admm_factor_solve(const DenseMatrix& target, const DenseMatrix& fixed,
                              const DenseMatrix& z, const DenseMatrix& l,
                              double rho, double ridge);

struct AdmmConfig {
  std::uint32_t rank = 1;
  int max_iters = 400;
  // 0 means auto: rho_start = 0.1 * sigma_max(target), rho_end = 10 * that
  // spectral scale, interpolated linearly over max_iters.
  double rho_start = 0.0;
  double rho_end = 0.0;
  double ridge = 1e-4;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

struct AdmmState {
  DenseMatrix u, v;      // continuous factors, n x r and m x r
  DenseMatrix z_u, z_v;  // SVID proxies
  DenseMatrix l_u, l_v;  // scaled duals (Lambda = Y / rho)
  double rho = 0.0;
  std::size_t iteration = 0;
  std::vector<double> lagrangian_trace;  // entry 0 is the initial value
  double primal_residual = 0.0;          // max of the two relative residuals
  bool converged = false;
};

// 1/2 ||target - U V^T||^2 + ridge/2 (||U||^2 + ||V||^2)
//   + sum_X [ <rho L_X, X - Z_X> + rho/2 ||X - Z_X||^2 ]
double augmented_lagrangian(const AdmmState& state, const DenseMatrix& target,
                            double ridge);

struct AdmmResult {
  AdmmState state;
  DenseMatrix consensus_u;  // P_U = U + L_U
  DenseMatrix consensus_v;  // P_V = V + L_V
};

// Alternating solve / SVID projection / dual ascent on the preconditioned
// target, initialized from the balanced truncated SVD. Factor norms are
// re-balanced each iteration (proxies and duals fold along), which keeps the
// subproblem conditioning bounded without perturbing the recorded
// Lagrangian near the fixed point.
AdmmResult admm_factorize(const DenseMatrix& target, const AdmmConfig& config);

// Penalty large enough for the monotone-descent regime (rho > L_f). The
// spectral norm estimates the curvature scale at initialization; the factor
// of 16 covers the trajectory's compact-set Lipschitz bound.
double monotone_rho(const DenseMatrix& target);

}  // namespace nanoquant

#endif  // NANOQUANT_ADMM_HPP
