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
#include <cstdint>
#include <string>

#include "nanoquant/io.hpp"
#include "nanoquant/rng.hpp"
#include "nanoquant/storage.hpp"

using namespace nanoquant;

namespace {

// Literal layout construction: every stored component is counted by walking
// its elements, independent of the closed forms in the library.
std::uint64_t count_bits_oracle(const BaselineParams& p, std::uint64_t n,
                                std::uint64_t m) {
  const std::uint64_t blocks = (m + p.k - 1) / p.k;
  std::uint64_t bits = 0;
  switch (p.method) {
    case BaselineMethod::kBiLlm: {
      for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < p.c; ++j) bits += 2;   // salient 2nd-order signs
        for (std::uint64_t j = 0; j < m - p.c; ++j) bits += 1;  // non-salient signs
        for (std::uint64_t b = 0; b < blocks; ++b) {
          bits += 3 * 16;      // salient alpha1, alpha2, mu
          bits += 2 * 16 * 2;  // two non-salient groups: scale + mean each
        }
        for (std::uint64_t j = 0; j < m; ++j) bits += 1;  // group bitmap row
        bits += 2;  // per-row allowance
      }
      for (std::uint64_t j = 0; j < m; ++j) bits += 1;  // salient column bitmap
      return bits;
    }
    case BaselineMethod::kStbLlm: {
      const std::uint64_t idx = sparsity_index_bits(p.sparsity_n, p.sparsity_m);
      for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < p.c; ++j) bits += 2;
        for (std::uint64_t b = 0; b < blocks; ++b) {
          bits += 3 * 16;      // salient scales + mean
          bits += 2 * 16 * 3;  // three groups: scale + mean each
        }
        // kept (non-zero) weights and their sparsity indices over m - c
        const std::uint64_t kept = (m - p.c) / p.sparsity_m * p.sparsity_n;
        for (std::uint64_t j = 0; j < kept; ++j) bits += 1;
        const std::uint64_t sparse_blocks = (m - p.c) / p.sparsity_m;
        for (std::uint64_t b = 0; b < sparse_blocks; ++b) bits += idx;
        // 2-bit group tags on the stored fraction of the full row
        bits += 2 * m / p.sparsity_m * p.sparsity_n;
        bits += 2;  // per-row allowance
      }
      for (std::uint64_t j = 0; j < m; ++j) bits += 1;  // salient column bitmap
      return bits;
    }
    case BaselineMethod::kArbLlmRC: {
      for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < p.c; ++j) bits += 2;
        for (std::uint64_t j = 0; j < m - p.c; ++j) bits += 1;
        for (std::uint64_t b = 0; b < blocks; ++b) {
          bits += 2 * 16;  // salient two-group scales
          bits += 16 * 2;  // non-salient scale + mean, two groups share blocks
        }
        for (std::uint64_t j = 0; j < m; ++j) bits += 1;  // group bitmap
        bits += 2;  // per-row refinement flags
      }
      for (std::uint64_t j = 0; j < p.c; ++j) bits += 2 * 16;      // salient col params
      for (std::uint64_t j = 0; j < m - p.c; ++j) bits += 2 * 16;  // non-salient col params
      for (std::uint64_t j = 0; j < m; ++j) bits += 1;             // salient bitmap
      for (std::uint64_t b = 0; b < blocks; ++b) bits += 2 * 16;   // column refinement
      return bits;
    }
    case BaselineMethod::kHbllmRow: {
      for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < m; ++j) bits += 1;  // unsalient signs
        for (std::uint64_t j = 0; j < p.c; ++j) bits += 1;  // salient signs
        for (std::uint64_t b = 0; b < blocks; ++b) {
          bits += 3 * 16 * 2;  // unsalient, two groups, four subgroup params
          bits += 2 * 16 * 2;  // salient, two groups
        }
        for (std::uint64_t j = 0; j < m + p.c; ++j) bits += 1;  // group bitmap
      }
      for (std::uint64_t j = 0; j < m; ++j) bits += 1;
      return bits;
    }
    case BaselineMethod::kHbllmCol: {
      for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < m - p.c; ++j) bits += 1;
        for (std::uint64_t j = 0; j < p.c; ++j) bits += 1;
        for (std::uint64_t b = 0; b < blocks; ++b) {
          // 1.5n sharing: three 16-bit params per two rows, plus salient pair
          bits += 16 * 3 / 2 * 2 + 2 * 16 * 2;
        }
        for (std::uint64_t j = 0; j < m; ++j) bits += 1;
      }
      for (std::uint64_t j = 0; j < m; ++j) bits += 1;
      return bits;
    }
  }
  return 0;
}

}  // namespace

TEST_CASE("bpw_nanoquant closed forms") {
  CHECK(bpw_nanoquant(64, 64, 16) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bpw_nanoquant(4096, 4096, 2032) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bpw_nanoquant(2, 2, 1) == doctest::Approx(17.0).epsilon(1e-15));
  CHECK_THROWS_AS(bpw_nanoquant(4, 4, 0), InvalidRank);
}

TEST_CASE("bpw_dbf strictly above nanoquant at equal shape") {
  CHECK(bpw_dbf(64, 64, 16) == doctest::Approx(1.0625).epsilon(1e-15));
  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint64_t n = 1 + rng.index(2000), m = 1 + rng.index(2000);
    const std::uint64_t r = 1 + rng.index(std::min(n, m));
    CHECK(bpw_dbf(n, m, r) > bpw_nanoquant(n, m, r));
    CHECK(bpw_dbf(n, m, r) - bpw_nanoquant(n, m, r) ==
          doctest::Approx(16.0 * r / (static_cast<double>(n) * m)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(bpw_dbf(8, 8, 0), InvalidRank);
}

TEST_CASE("bpw_baseline single-layer reference values") {
  BaselineParams billm;
  billm.method = BaselineMethod::kBiLlm;
  billm.c = 0;
  CHECK(bpw_baseline(billm, 4096, 4096) ==
        doctest::Approx(2.875732421875).epsilon(1e-12));
  billm.c = 50;
  CHECK(bpw_baseline(billm, 4096, 4096) ==
        doctest::Approx(2.887939453125).epsilon(1e-12));

  BaselineParams stb;
  stb.method = BaselineMethod::kStbLlm;
  stb.sparsity_n = 6;
  stb.sparsity_m = 8;
  CHECK(sparsity_index_bits(6, 8) == 5);  // ceil(log2 C(8,6)) = ceil(log2 28)
  CHECK(bpw_baseline(stb, 4096, 4096) ==
        doctest::Approx(4.000732421875).epsilon(1e-12));

  BaselineParams arb;
  arb.method = BaselineMethod::kArbLlmRC;
  CHECK(bpw_baseline(arb, 4096, 4096) ==
        doctest::Approx(2.50860595703125).epsilon(1e-12));

  BaselineParams hbr;
  hbr.method = BaselineMethod::kHbllmRow;
  CHECK(bpw_baseline(hbr, 4096, 4096) ==
        doctest::Approx(3.250244140625).epsilon(1e-12));

  BaselineParams bad = billm;
  bad.c = 51;
  CHECK_THROWS_AS(bpw_baseline(bad, 128, 128), InvalidSalientCount);
  bad.c = 40;
  CHECK_THROWS_AS(bpw_baseline(bad, 128, 16), InvalidSalientCount);
}

TEST_CASE("bit-counting oracle agrees with the closed forms to the bit") {
  Rng rng(92);
  const BaselineMethod methods[] = {BaselineMethod::kBiLlm, BaselineMethod::kStbLlm,
                                    BaselineMethod::kArbLlmRC, BaselineMethod::kHbllmRow,
                                    BaselineMethod::kHbllmCol};
  for (BaselineMethod method : methods) {
    for (int trial = 0; trial < 50; ++trial) {
      BaselineParams p;
      p.method = method;
      p.k = 16u << rng.index(4);  // 16..128
      std::uint64_t n, m;
      if (method == BaselineMethod::kStbLlm) {
        const std::uint64_t patterns[3][2] = {{4, 8}, {6, 8}, {8, 8}};
        const auto& pat = patterns[rng.index(3)];
        p.sparsity_n = pat[0];
        p.sparsity_m = pat[1];
        n = 8 * (1 + rng.index(40));      // keeps 2nm/M integral
        m = 8 * (7 + rng.index(50));      // keeps (m-c)/M integral
        p.c = 8 * rng.index(7);           // 0..48
      } else {
        n = 1 + rng.index(400);
        m = 51 + rng.index(400);
        if (method == BaselineMethod::kHbllmCol) {
          n = 2 * (1 + rng.index(200));  // row pairing
        }
        p.c = rng.index(51);
      }
      const double closed = layer_bits_baseline(p, n, m);
      const std::uint64_t counted = count_bits_oracle(p, n, m);
      CHECK(closed == static_cast<double>(counted));
      CHECK(static_cast<std::uint64_t>(std::llround(closed)) == counted);
    }
  }
}

TEST_CASE("bpw monotone in salient columns where claimed") {
  Rng rng(93);
  const BaselineMethod monotone[] = {BaselineMethod::kBiLlm, BaselineMethod::kArbLlmRC,
                                     BaselineMethod::kHbllmRow};
  for (BaselineMethod method : monotone) {
    for (int trial = 0; trial < 20; ++trial) {
      BaselineParams p;
      p.method = method;
      const std::uint64_t n = 1 + rng.index(500), m = 60 + rng.index(500);
      double prev = -1.0;
      for (std::uint64_t c : {0ull, 10ull, 25ull, 50ull}) {
        p.c = c;
        const double bpw = bpw_baseline(p, n, m);
        CHECK(bpw >= prev);
        prev = bpw;
      }
    }
  }
}

TEST_CASE("rank_for_target_bpw arithmetic") {
  CHECK(rank_for_target_bpw(64, 64, 1.0) == 16);
  CHECK(rank_for_target_bpw(4096, 4096, 1.0) == 2032);
  CHECK(rank_for_target_bpw(4096, 4096, 0.55) == 1110);
  CHECK_THROWS_AS(rank_for_target_bpw(4096, 4096, 1e-4), TargetTooSmall);
  // tiny layers clamp to 1 when rank 1 does not overshoot 2x
  CHECK(rank_for_target_bpw(2000, 2000, 0.01) == 1);
}

TEST_CASE("rank round trip stays within one rank quantum") {
  Rng rng(94);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t n = 64 + rng.index(4096), m = 64 + rng.index(4096);
    const double target = rng.uniform(0.3, 3.0);
    const std::uint32_t r = rank_for_target_bpw(n, m, target);
    const double quantum = static_cast<double>(n + m) / (static_cast<double>(n) * m);
    if (r > 1 && r < std::min(n, m)) {
      CHECK(std::abs(bpw_nanoquant(n, m, r) - target) <= quantum);
    }
  }
}

TEST_CASE("model_report aggregates against the shipped Llama-2-7B shapes") {
  const ModelShape shape =
      read_shape_config(std::string(NANOQUANT_SHAPE_DIR) + "/llama2-7b.shape");

  BaselineParams billm;
  billm.method = BaselineMethod::kBiLlm;
  billm.c = 0;
  const BpwReport lo = model_report_baseline(shape, billm);
  billm.c = 50;
  const BpwReport hi = model_report_baseline(shape, billm);
  CHECK(std::round(lo.bpw * 100) / 100 == doctest::Approx(2.88));
  CHECK(std::round(hi.bpw * 100) / 100 == doctest::Approx(2.89));

  BaselineParams hbr;
  hbr.method = BaselineMethod::kHbllmRow;
  hbr.c = 0;
  CHECK(std::round(model_report_baseline(shape, hbr).bpw * 100) / 100 ==
        doctest::Approx(3.25));

  RankPolicy one_bit;
  one_bit.target_bpw = 1.0;
  const BpwReport nq = model_report_nanoquant(shape, one_bit);
  CHECK(std::round(nq.bpw * 100) / 100 == doctest::Approx(1.00));
  CHECK(std::round(nq.gibibytes_binary * 100) / 100 == doctest::Approx(1.24));
  // report consistency: BPW equals total bits over 16x-scaled param ratio
  CHECK(nq.size_ratio == doctest::Approx(nq.bpw / 16.0).epsilon(1e-12));
}

TEST_CASE("shape config parser") {
  const ModelShape shape = parse_shape_config(
      "# comment\n"
      "q 128 256 3\n"
      "residual 1000\n"
      "v 64 64 1 # trailing comment\n");
  REQUIRE(shape.layers.size() == 2);
  CHECK(shape.layers[0].name == "q");
  CHECK(shape.layers[0].n == 128);
  CHECK(shape.layers[0].m == 256);
  CHECK(shape.layers[0].count == 3);
  CHECK(shape.residual_fp16_params == 1000);
  CHECK_THROWS_AS(parse_shape_config("residual 5\n"), ParseError);
  CHECK_THROWS_AS(parse_shape_config("bad 1 2\n"), ParseError);
}
