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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nanoquant/balance.hpp"
#include "test_support.hpp"

using namespace nanoquant;
using nqtest::random_matrix;

TEST_CASE("balance scalar example") {
  const DenseMatrix pu(1, 1, 2.0);
  const DenseMatrix pv(1, 1, 8.0);
  Preconditioner ident;
  const BalancedLatents lat = balance_and_extract_scales(pu, pv, ident, 1e-12);
  CHECK(lat.eta == doctest::Approx(2.0));
  CHECK(lat.latent_u(0, 0) == doctest::Approx(4.0));
  CHECK(lat.latent_v(0, 0) == doctest::Approx(4.0));
  CHECK(lat.s1[0] == doctest::Approx(4.0));
  CHECK(lat.s2[0] == doctest::Approx(4.0));
}

TEST_CASE("balance symmetric input is a fixed point") {
  Rng rng(41);
  const DenseMatrix p = random_matrix(rng, 5, 2);
  Preconditioner ident;
  const BalancedLatents lat = balance_and_extract_scales(p, p, ident, 1e-12);
  CHECK(lat.eta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(relative_frobenius_error(p, lat.latent_u) <= 1e-12);
  CHECK(relative_frobenius_error(p, lat.latent_v) <= 1e-12);
}

TEST_CASE("balance zero row hits the scale floor") {
  DenseMatrix pu(3, 2, 1.0);
  pu(1, 0) = 0.0;
  pu(1, 1) = 0.0;
  const DenseMatrix pv(4, 2, 1.0);
  Preconditioner ident;
  const BalancedLatents lat = balance_and_extract_scales(pu, pv, ident, 1e-12);
  CHECK(lat.s1[1] == doctest::Approx(1e-12));
  CHECK(lat.s1[0] > 1e-12);
}

TEST_CASE("balance invariants on random factor pairs") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(24), m = 1 + rng.index(24);
    const std::size_t r = 1 + rng.index(4);
    DenseMatrix pu = random_matrix(rng, n, r);
    DenseMatrix pv = random_matrix(rng, m, r);
    pu.scale(rng.uniform(0.1, 10.0));
    pv.scale(rng.uniform(0.1, 10.0));
    Preconditioner ident;
    const BalancedLatents lat = balance_and_extract_scales(pu, pv, ident, 1e-12);

    // norm equality at sqrt(||U^|| * ||V^||)
    const double nu = lat.latent_u.frobenius_norm();
    const double nv = lat.latent_v.frobenius_norm();
    CHECK(std::abs(nu - nv) <= 1e-9 * std::max(nu, nv));
    CHECK(nu == doctest::Approx(std::sqrt(pu.frobenius_norm() * pv.frobenius_norm()))
                    .epsilon(1e-9));

    // sign preservation
    for (std::size_t i = 0; i < pu.size(); ++i) {
      CHECK((pu.data()[i] < 0.0) == (lat.latent_u.data()[i] < 0.0));
    }
    for (std::size_t i = 0; i < pv.size(); ++i) {
      CHECK((pv.data()[i] < 0.0) == (lat.latent_v.data()[i] < 0.0));
    }

    // reconstruction invariance: latents multiply back to P_U P_V^T
    const DenseMatrix before = matmul(pu, pv.transposed());
    const DenseMatrix after = matmul(lat.latent_u, lat.latent_v.transposed());
    CHECK(relative_frobenius_error(before, after) <= 1e-10);

    for (double s : lat.s1) CHECK(s >= 1e-12);
    for (double s : lat.s2) CHECK(s >= 1e-12);
  }
}

TEST_CASE("balance un-preconditions with the diagonals") {
  Rng rng(43);
  const std::size_t n = 6, m = 4, r = 2;
  const DenseMatrix pu = random_matrix(rng, n, r);
  const DenseMatrix pv = random_matrix(rng, m, r);
  Preconditioner p;
  p.diag_out = {1.5, 0.5, 2.0, 1.0, 0.25, 3.0};
  p.diag_in = {0.5, 4.0, 1.0, 2.0};

  const BalancedLatents lat = balance_and_extract_scales(pu, pv, p, 1e-12);
  // eta cancels in the product; latents reconstruct D_out^-1 P_U P_V^T D_in^-1
  DenseMatrix expect = matmul(pu, pv.transposed());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      expect(i, j) /= p.diag_out[i] * p.diag_in[j];
    }
  }
  const DenseMatrix got = matmul(lat.latent_u, lat.latent_v.transposed());
  CHECK(relative_frobenius_error(expect, got) <= 1e-10);
}

TEST_CASE("balance zero factor falls back to eta = 1") {
  const DenseMatrix pu(3, 1);
  const DenseMatrix pv(2, 1, 1.0);
  Preconditioner ident;
  const BalancedLatents lat = balance_and_extract_scales(pu, pv, ident, 1e-12);
  CHECK(lat.eta == 1.0);
}
