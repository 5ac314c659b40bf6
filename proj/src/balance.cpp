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

#include "nanoquant/balance.hpp"

#include <cmath>

namespace nanoquant {

namespace {

std::vector<double> row_mean_abs(const DenseMatrix& m, double floor) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += std::abs(row[j]);
    out[i] = std::max(s / static_cast<double>(m.cols()), floor);
  }
  return out;
}

}  // namespace

BalancedLatents balance_and_extract_scales(const DenseMatrix& consensus_u,
                                           const DenseMatrix& consensus_v,
                                           const Preconditioner& p,
                                           double scale_floor) {
  if (!p.diag_out.empty() && consensus_u.rows() != p.diag_out.size()) {
    throw DimensionMismatch("balance: rows(P_U) != |diag_out|");
  }
  if (!p.diag_in.empty() && consensus_v.rows() != p.diag_in.size()) {
    throw DimensionMismatch("balance: rows(P_V) != |diag_in|");
  }
  if (consensus_u.cols() != consensus_v.cols()) {
    throw DimensionMismatch("balance: factor ranks differ");
  }

  BalancedLatents out;
  out.latent_u = consensus_u;
  out.latent_v = consensus_v;
  unprecondition_rows(out.latent_u, p.diag_out);
  unprecondition_rows(out.latent_v, p.diag_in);

  const double nu = out.latent_u.frobenius_norm();
  const double nv = out.latent_v.frobenius_norm();
  out.eta = (nu == 0.0 || nv == 0.0) ? 1.0 : std::sqrt(nv / nu);
  out.latent_u.scale(out.eta);
  out.latent_v.scale(1.0 / out.eta);

  out.s1 = row_mean_abs(out.latent_u, scale_floor);
  out.s2 = row_mean_abs(out.latent_v, scale_floor);
  return out;
}

}  // namespace nanoquant
