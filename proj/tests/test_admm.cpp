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

#include "nanoquant/admm.hpp"
#include "nanoquant/balance.hpp"
#include "nanoquant/linalg.hpp"
#include "nanoquant/packed.hpp"
#include "test_support.hpp"

using namespace nanoquant;
using nqtest::random_matrix;

namespace {

DenseMatrix sign_of(const DenseMatrix& p) {
  DenseMatrix s = p;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.data()[i] = s.data()[i] < 0.0 ? -1.0 : 1.0;
  }
  return s;
}

double subproblem_objective(const DenseMatrix& x, const DenseMatrix& target,
                            const DenseMatrix& fixed, const DenseMatrix& z,
                            const DenseMatrix& l, double rho, double ridge) {
  double obj = 0.5 * subtract(target, matmul(x, fixed.transposed())).squared_frobenius_norm();
  obj += 0.5 * ridge * x.squared_frobenius_norm();
  obj += 0.5 * rho * subtract(add(x, l), z).squared_frobenius_norm();
  return obj;
}

}  // namespace

TEST_CASE("svid exact on sign-structured rank-1 magnitude") {
  const DenseMatrix p = DenseMatrix::from_values(2, 2, {2, -2, -2, 2});
  CHECK(relative_frobenius_error(p, svid(p)) <= 1e-10);

  const DenseMatrix ones(3, 5, 2.5);
  CHECK(relative_frobenius_error(ones, svid(ones)) <= 1e-10);
}

TEST_CASE("svid dominates random nonnegative rank-1 candidates") {
  Rng rng(21);
  const DenseMatrix p = random_matrix(rng, 8, 3);
  const DenseMatrix z = svid(p);
  const double z_err = subtract(p, z).frobenius_norm();
  const DenseMatrix s = sign_of(p);
  for (int trial = 0; trial < 1000; ++trial) {
    DenseMatrix cand(8, 3);
    std::vector<double> a(8), b(3);
    for (auto& x : a) x = rng.uniform(0.0, 3.0);
    for (auto& x : b) x = rng.uniform(0.0, 3.0);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 3; ++j) cand(i, j) = s(i, j) * a[i] * b[j];
    }
    CHECK(z_err <= subtract(p, cand).frobenius_norm() + 1e-9);
  }
}

TEST_CASE("svid zero matrix throws") {
  CHECK_THROWS_AS(svid(DenseMatrix(2, 2)), ZeroMatrix);
}

TEST_CASE("admm_factor_solve penalty-dominated limit") {
  Rng rng(22);
  const DenseMatrix target = random_matrix(rng, 6, 4);
  const DenseMatrix fixed = random_matrix(rng, 4, 2);
  const DenseMatrix z = random_matrix(rng, 6, 2);
  const DenseMatrix l = random_matrix(rng, 6, 2);
  const DenseMatrix x = admm_factor_solve(target, fixed, z, l, 1e9, 0.0);
  CHECK(relative_frobenius_error(subtract(z, l), x) <= 1e-6);
}

TEST_CASE("admm_factor_solve rank-1 least squares limit") {
  Rng rng(23);
  const DenseMatrix target = random_matrix(rng, 5, 7);
  DenseMatrix e1(7, 1);
  e1(0, 0) = 1.0;
  const DenseMatrix z(5, 1), l(5, 1);
  const DenseMatrix x = admm_factor_solve(target, e1, z, l, 1e-12, 0.0);
  const DenseMatrix expect = matmul(target, e1);
  CHECK(relative_frobenius_error(expect, x) <= 1e-8);
}

TEST_CASE("admm_factor_solve is a local minimizer") {
  Rng rng(24);
  const DenseMatrix target = random_matrix(rng, 5, 6);
  const DenseMatrix fixed = random_matrix(rng, 6, 3);
  const DenseMatrix z = random_matrix(rng, 5, 3);
  const DenseMatrix l = random_matrix(rng, 5, 3);
  const double rho = 0.7, ridge = 1e-3;
  const DenseMatrix x = admm_factor_solve(target, fixed, z, l, rho, ridge);
  const double base = subproblem_objective(x, target, fixed, z, l, rho, ridge);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      for (double delta : {1e-3, -1e-3}) {
        DenseMatrix perturbed = x;
        perturbed(i, j) += delta;
        CHECK(subproblem_objective(perturbed, target, fixed, z, l, rho, ridge) > base);
      }
    }
  }
}

TEST_CASE("augmented_lagrangian zero at exact consensus and fit") {
  Rng rng(25);
  AdmmState s;
  s.u = random_matrix(rng, 4, 2);
  s.v = random_matrix(rng, 3, 2);
  s.z_u = s.u;
  s.z_v = s.v;
  s.l_u = DenseMatrix(4, 2);
  s.l_v = DenseMatrix(3, 2);
  s.rho = 1.3;
  const DenseMatrix target = matmul(s.u, s.v.transposed());
  CHECK(std::abs(augmented_lagrangian(s, target, 0.0)) <= 1e-12);
}

TEST_CASE("augmented_lagrangian ridge term isolation") {
  AdmmState s;
  s.u = DenseMatrix(2, 1, 1.0);
  s.v = DenseMatrix(2, 1, 0.0);
  s.z_u = s.u;
  s.z_v = s.v;
  s.l_u = DenseMatrix(2, 1);
  s.l_v = DenseMatrix(2, 1);
  s.rho = 1.0;
  const DenseMatrix target(2, 2);
  // ridge/2 (||U||^2 + 0) with ridge=2 equals ||U||_F^2
  CHECK(augmented_lagrangian(s, target, 2.0) ==
        doctest::Approx(s.u.squared_frobenius_norm()).epsilon(1e-12));
}

TEST_CASE("augmented_lagrangian matches independently coded term sum") {
  Rng rng(26);
  AdmmState s;
  s.u = random_matrix(rng, 5, 2);
  s.v = random_matrix(rng, 4, 2);
  s.z_u = random_matrix(rng, 5, 2);
  s.z_v = random_matrix(rng, 4, 2);
  s.l_u = random_matrix(rng, 5, 2);
  s.l_v = random_matrix(rng, 4, 2);
  s.rho = 0.37;
  const DenseMatrix target = random_matrix(rng, 5, 4);
  const double ridge = 0.021;

  // duplicate formula, coded entrywise
  double expect = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double fit = target(i, j);
      for (std::size_t k = 0; k < 2; ++k) fit -= s.u(i, k) * s.v(j, k);
      expect += 0.5 * fit * fit;
    }
  }
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    expect += 0.5 * ridge * s.u.data()[i] * s.u.data()[i];
    const double ru = s.u.data()[i] - s.z_u.data()[i];
    expect += s.rho * s.l_u.data()[i] * ru + 0.5 * s.rho * ru * ru;
  }
  for (std::size_t i = 0; i < s.v.size(); ++i) {
    expect += 0.5 * ridge * s.v.data()[i] * s.v.data()[i];
    const double rv = s.v.data()[i] - s.z_v.data()[i];
    expect += s.rho * s.l_v.data()[i] * rv + 0.5 * s.rho * rv * rv;
  }
  CHECK(augmented_lagrangian(s, target, ridge) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("admm_factorize recovers in-class rank-1 targets") {
  Rng rng(27);
  int hits = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const std::size_t n = 2 + rng.index(63), m = 2 + rng.index(63);
    const DenseMatrix w = nqtest::in_class_target(rng, n, m);
    AdmmConfig config;
    config.rank = 1;
    config.max_iters = 400;
    const AdmmResult res = admm_factorize(w, config);
    Preconditioner ident;
    const BalancedLatents lat = balance_and_extract_scales(
        res.consensus_u, res.consensus_v, ident, 1e-12);
    const FactorizedLayer layer =
        make_factorized_layer(lat.latent_u, lat.latent_v, lat.s1, lat.s2);
    if (relative_frobenius_error(w, reconstruct_dense(layer)) <= 1e-3) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("admm_factorize degenerate run returns initialization") {
  Rng rng(28);
  const DenseMatrix w = random_matrix(rng, 6, 5);
  AdmmConfig config;
  config.rank = 2;
  config.max_iters = 1;
  config.tol = 1e9;
  const AdmmResult res = admm_factorize(w, config);
  CHECK(res.state.iteration == 0);
  CHECK(res.state.lagrangian_trace.size() >= 1);
  // L = 0 so the consensus variables equal the SVD initialization
  DenseMatrix u0, v0;
  truncated_svd_factors(w, 2, &u0, &v0);
  CHECK(relative_frobenius_error(u0, res.consensus_u) <= 1e-12);
  CHECK(relative_frobenius_error(v0, res.consensus_v) <= 1e-12);
}

TEST_CASE("admm_factorize monotone descent at fixed rho (16x12, r=2)") {
  Rng rng(29);
  const DenseMatrix w = random_matrix(rng, 16, 12);
  AdmmConfig config;
  config.rank = 2;
  config.max_iters = 120;
  config.rho_start = config.rho_end = monotone_rho(w);
  const AdmmResult res = admm_factorize(w, config);
  const auto& trace = res.state.lagrangian_trace;
  REQUIRE(trace.size() >= 2);
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    CHECK(trace[k + 1] <= trace[k] + 1e-8 * (1.0 + std::abs(trace[k])));
  }
}

TEST_CASE("admm_factorize deterministic trace for fixed config") {
  Rng rng(30);
  const DenseMatrix w = random_matrix(rng, 10, 8);
  AdmmConfig config;
  config.rank = 2;
  config.max_iters = 60;
  const AdmmResult a = admm_factorize(w, config);
  const AdmmResult b = admm_factorize(w, config);
  REQUIRE(a.state.lagrangian_trace.size() == b.state.lagrangian_trace.size());
  for (std::size_t i = 0; i < a.state.lagrangian_trace.size(); ++i) {
    CHECK(a.state.lagrangian_trace[i] == b.state.lagrangian_trace[i]);
  }
  CHECK(a.consensus_u == b.consensus_u);
  CHECK(a.consensus_v == b.consensus_v);
}

TEST_CASE("admm_factorize primal residual below tol at convergence") {
  Rng rng(31);
  const DenseMatrix w = nqtest::in_class_target(rng, 20, 16);
  AdmmConfig config;
  config.rank = 1;
  config.max_iters = 400;
  const AdmmResult res = admm_factorize(w, config);
  CHECK(res.state.converged);
  CHECK(res.state.primal_residual < config.tol);
}

TEST_CASE("admm_factorize error decreases as rank doubles") {
  Rng rng(32);
  double mean_err[3] = {0, 0, 0};
  const std::uint32_t ranks[3] = {4, 8, 16};
  for (int seed = 0; seed < 20; ++seed) {
    const DenseMatrix w = random_matrix(rng, 64, 64);
    for (int ri = 0; ri < 3; ++ri) {
      AdmmConfig config;
      config.rank = ranks[ri];
      config.max_iters = 200;
      const AdmmResult res = admm_factorize(w, config);
      Preconditioner ident;
      const BalancedLatents lat = balance_and_extract_scales(
          res.consensus_u, res.consensus_v, ident, 1e-12);
      const FactorizedLayer layer =
          make_factorized_layer(lat.latent_u, lat.latent_v, lat.s1, lat.s2);
      mean_err[ri] += relative_frobenius_error(w, reconstruct_dense(layer)) / 20.0;
    }
  }
  CHECK(mean_err[0] >= mean_err[1]);
  CHECK(mean_err[1] >= mean_err[2]);
}

TEST_CASE("admm_factorize validates rank and target") {
  AdmmConfig config;
  config.rank = 5;
  CHECK_THROWS_AS(admm_factorize(DenseMatrix(3, 3, 1.0), config), RankTooLarge);
  config.rank = 1;
  CHECK_THROWS_AS(admm_factorize(DenseMatrix(3, 3), config), ZeroMatrix);
}
