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

#ifndef NANOQUANT_LINALG_HPP
#define NANOQUANT_LINALG_HPP

#include <vector>

#include "nanoquant/dense.hpp"

namespace nanoquant {

struct SingularPair {
  double sigma = 0.0;
  std::vector<double> left;   // unit length
  std::vector<double> right;  // unit length
  bool converged = false;
};

// Solves A X = B for symmetric positive definite A via LL^T with escalating
// diagonal jitter {1e-10, 1e-7, 1e-4} * mean(diag(A)) when a pivot fails.
// One round of iterative refinement keeps the residual near machine level
// even for conditioning around 1e8.
DenseMatrix cholesky_solve(const DenseMatrix& a, const DenseMatrix& b);

// Dominant singular triple by power iteration on M^T M. The start vector is
// the column-norm profile of M, so entrywise-nonnegative inputs stay inside
// the nonnegative cone and the returned pair is nonnegative. Non-convergence
// is not an error; the best estimate comes back with converged = false.
SingularPair top_singular_pair(const DenseMatrix& m, int max_iters = 500,
                               double tol = 1e-12);

// sigma_max within ~1% on generic inputs; zero matrix yields 0.
double spectral_norm_estimate(const DenseMatrix& m, int iters = 200);

// Leading `rank` singular directions via power iteration with deflation,
// returned as balanced factors U = L_r sqrt(S_r), V = R_r sqrt(S_r). Used for
// solver initialization only; accuracy degrades gracefully on tight spectra.
void truncated_svd_factors(const DenseMatrix& m, std::size_t rank,
                           DenseMatrix* u_out, DenseMatrix* v_out);

}  // namespace nanoquant

#endif  // NANOQUANT_LINALG_HPP
