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

#ifndef NANOQUANT_BALANCE_HPP
#define NANOQUANT_BALANCE_HPP

#include <vector>

#include "nanoquant/dense.hpp"
#include "nanoquant/precondition.hpp"

namespace nanoquant {

struct BalancedLatents {
  DenseMatrix latent_u;     // n x r
  DenseMatrix latent_v;     // m x r
  std::vector<double> s1;   // length n
  std::vector<double> s2;   // length m
  double eta = 1.0;
};

// Recovers the unscaled proxies (rows divided by the preconditioner
// diagonals), equalizes their Frobenius norms with eta = sqrt(||V^||/||U^||),
// and reads the scales off as per-row mean absolute values floored at
// scale_floor. eta falls back to 1 when either factor has zero norm so that
// degenerate sparse targets still pass through.
BalancedLatents balance_and_extract_scales(const DenseMatrix& consensus_u,
                                           const DenseMatrix& consensus_v,
                                           const Preconditioner& p,
                                           double scale_floor = 1e-12);

}  // namespace nanoquant

#endif  // NANOQUANT_BALANCE_HPP
