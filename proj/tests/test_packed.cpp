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

#include "nanoquant/packed.hpp"
#include "test_support.hpp"

using namespace nanoquant;
using nqtest::random_matrix;
using nqtest::random_sign_matrix;

namespace {

FactorizedLayer random_layer(Rng& rng, std::size_t n, std::size_t m, std::size_t r) {
  std::vector<double> s1(n), s2(m);
  for (auto& s : s1) s = rng.uniform(0.25, 2.0);
  for (auto& s : s2) s = rng.uniform(0.25, 2.0);
  return make_factorized_layer(random_matrix(rng, n, r), random_matrix(rng, m, r),
                               std::move(s1), std::move(s2));
}

}  // namespace

TEST_CASE("binarize includes the sign(0) rule") {
  const DenseMatrix latent = DenseMatrix::from_values(2, 2, {0.3, -0.2, 0.0, -5.0});
  const DenseMatrix b = binarize(latent);
  CHECK(b(0, 0) == 1.0);
  CHECK(b(0, 1) == -1.0);
  CHECK(b(1, 0) == 1.0);
  CHECK(b(1, 1) == -1.0);

  Rng rng(71);
  const DenseMatrix r = random_matrix(rng, 6, 6);
  CHECK(binarize(binarize(r)) == binarize(r));

  DenseMatrix bad(1, 1);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(binarize(bad), NonFiniteInput);
}

TEST_CASE("pack_signs hand-checked layouts") {
  const PackedBitMatrix p =
      pack_signs(DenseMatrix::from_values(1, 4, {1, -1, 1, -1}));
  REQUIRE(p.words.size() == 1);
  CHECK(p.words[0] == 5u);

  DenseMatrix row33(1, 33, 1.0);
  const PackedBitMatrix p33 = pack_signs(row33);
  REQUIRE(p33.words.size() == 2);
  CHECK(p33.words[0] == 0xFFFFFFFFu);
  CHECK(p33.words[1] == 0x00000001u);

  const PackedBitMatrix zeros = pack_signs(DenseMatrix(1, 32, -1.0));
  CHECK(zeros.words[0] == 0u);

  CHECK_THROWS_AS(pack_signs(DenseMatrix(1, 3, 0.5)), NonBinaryEntry);
}

TEST_CASE("unpack inverts pack and flags corrupt padding") {
  PackedBitMatrix p;
  p.rows = 1;
  p.cols = 4;
  p.words = {5u};
  const DenseMatrix s = unpack_signs(p);
  CHECK(s == DenseMatrix::from_values(1, 4, {1, -1, 1, -1}));

  p.words = {5u | (1u << 10)};  // bit beyond cols
  CHECK_THROWS_AS(unpack_signs(p), CorruptPadding);
}

TEST_CASE("pack/unpack round-trip across word boundaries") {
  Rng rng(72);
  for (std::size_t cols : {1, 31, 32, 33, 64, 67, 100}) {
    const DenseMatrix s = random_sign_matrix(rng, 1 + rng.index(8), cols);
    CHECK(unpack_signs(pack_signs(s)) == s);
  }
}

TEST_CASE("reconstruct_dense basics") {
  // rank 1 all +1 with unit scales
  FactorizedLayer ones = make_factorized_layer(
      DenseMatrix(3, 1, 1.0), DenseMatrix(4, 1, 1.0), {1, 1, 1}, {1, 1, 1, 1});
  const DenseMatrix w = reconstruct_dense(ones);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.data()[i] == 1.0);

  // rank cancellation: U = [+1 +1], V = [+1 -1]
  FactorizedLayer cancel = make_factorized_layer(
      DenseMatrix(1, 2, 1.0), DenseMatrix::from_values(1, 2, {1.0, -1.0}), {1.0}, {1.0});
  CHECK(reconstruct_dense(cancel)(0, 0) == 0.0);
}

TEST_CASE("reconstruct_dense matches the naive triple loop") {
  Rng rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.index(20), m = 1 + rng.index(20), r = 1 + rng.index(40);
    const FactorizedLayer layer = random_layer(rng, n, m, r);
    const DenseMatrix u = unpack_signs(layer.u);
    const DenseMatrix v = unpack_signs(layer.v);
    const DenseMatrix w = reconstruct_dense(layer);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double inner = 0.0;
        for (std::size_t k = 0; k < r; ++k) inner += u(i, k) * v(j, k);
        CHECK(std::abs(w(i, j) - layer.s1[i] * inner * layer.s2[j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("gemv_packed closed-form and zero cases") {
  FactorizedLayer ones = make_factorized_layer(
      DenseMatrix(3, 1, 1.0), DenseMatrix(5, 1, 1.0), {1, 1, 1}, {1, 1, 1, 1, 1});
  Rng rng(74);
  std::vector<double> x(5);
  double sum = 0.0;
  for (auto& v : x) {
    v = rng.gaussian();
    sum += v;
  }
  for (double y : gemv_packed(ones, x)) CHECK(y == doctest::Approx(sum).epsilon(1e-12));

  const std::vector<double> zero(5, 0.0);
  for (double y : gemv_packed(ones, zero)) CHECK(y == 0.0);

  CHECK_THROWS_AS(gemv_packed(ones, std::vector<double>(4)), DimensionMismatch);
}

TEST_CASE("gemv_packed equals dense oracle over 200 random layers") {
  Rng rng(75);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(512), m = 1 + rng.index(512);
    const std::size_t r = 1 + rng.index(64);
    const FactorizedLayer layer = random_layer(rng, n, m, r);
    std::vector<double> x(m);
    for (auto& v : x) v = rng.gaussian();
    const DenseMatrix dense = reconstruct_dense(layer);
    const std::vector<double> y = gemv_packed(layer, x);
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double expect = 0.0;
      const double* row = dense.row(i);
      for (std::size_t j = 0; j < m; ++j) expect += row[j] * x[j];
      err += (expect - y[i]) * (expect - y[i]);
      norm += expect * expect;
    }
    CHECK(std::sqrt(err) <= 1e-10 * (1.0 + std::sqrt(norm)));
  }
}

TEST_CASE("gemv_packed float accumulation stays within 1e-5 relative") {
  Rng rng(76);
  const FactorizedLayer layer = random_layer(rng, 256, 384, 48);
  std::vector<float> x(384);
  for (auto& v : x) v = static_cast<float>(rng.gaussian());
  std::vector<double> xd(x.begin(), x.end());
  const std::vector<double> exact = gemv_packed(layer, xd);
  const std::vector<float> approx = gemv_packed_f32(layer, x);
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    err += (exact[i] - approx[i]) * (exact[i] - approx[i]);
    norm += exact[i] * exact[i];
  }
  CHECK(std::sqrt(err) <= 1e-5 * (1.0 + std::sqrt(norm)));
}

TEST_CASE("gemv_packed large layer against materialized product") {
  Rng rng(77);
  const FactorizedLayer layer = random_layer(rng, 4096, 4096, 256);
  std::vector<double> x(4096);
  for (auto& v : x) v = rng.gaussian();
  const DenseMatrix dense = reconstruct_dense(layer);
  const std::vector<double> y = gemv_packed(layer, x);
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < 4096; ++i) {
    double expect = 0.0;
    const double* row = dense.row(i);
    for (std::size_t j = 0; j < 4096; ++j) expect += row[j] * x[j];
    err += (expect - y[i]) * (expect - y[i]);
    norm += expect * expect;
  }
  CHECK(std::sqrt(err) <= 1e-10 * (1.0 + std::sqrt(norm)));
}

TEST_CASE("gemm_packed equals gemv per column exactly") {
  Rng rng(78);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 1 + rng.index(60), m = 1 + rng.index(60);
    const std::size_t r = 1 + rng.index(48);
    const std::size_t b = 1 + rng.index(40);
    const FactorizedLayer layer = random_layer(rng, n, m, r);
    const DenseMatrix x = random_matrix(rng, m, b);
    const DenseMatrix y = gemm_packed(layer, x);
    for (std::size_t c = 0; c < b; ++c) {
      std::vector<double> col(m);
      for (std::size_t j = 0; j < m; ++j) col[j] = x(j, c);
      const std::vector<double> yc = gemv_packed(layer, col);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(y(i, c) == yc[i]);  // bit-identical at 64-bit accumulation
      }
    }
  }
}

TEST_CASE("gemm_packed identity probe reproduces the dense matrix") {
  Rng rng(79);
  const FactorizedLayer layer = random_layer(rng, 24, 18, 9);
  const DenseMatrix probe = identity(18);
  const DenseMatrix out = gemm_packed(layer, probe);
  CHECK(relative_frobenius_error(reconstruct_dense(layer), out) <= 1e-12);
}

TEST_CASE("gemm_packed multithreaded tiles match single-threaded") {
  Rng rng(80);
  const FactorizedLayer layer = random_layer(rng, 33, 47, 21);
  const DenseMatrix x = random_matrix(rng, 47, 70);
  set_thread_budget(1);
  const DenseMatrix st = gemm_packed(layer, x);
  set_thread_budget(4);
  const DenseMatrix mt = gemm_packed(layer, x);
  set_thread_budget(1);
  CHECK(st == mt);
}

TEST_CASE("payload accounting matches the storage formula") {
  Rng rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(100), m = 1 + rng.index(100);
    const std::size_t r = 1 + rng.index(70);
    const FactorizedLayer layer = random_layer(rng, n, m, r);
    CHECK(layer.payload_bits() == r * (n + m) + 16 * (n + m));
  }
}
