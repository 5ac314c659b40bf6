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
#include <cstdio>

#include "nanoquant/half.hpp"
#include "nanoquant/pipeline.hpp"
#include "test_support.hpp"

using namespace nanoquant;
using nqtest::random_matrix;

TEST_CASE("binary16 conversion") {
  // exactly representable values round-trip
  for (double v : {0.0, 1.0, -1.0, 0.5, 2.0, 65504.0, -65504.0, 0.0009765625}) {
    CHECK(half_to_double(double_to_half(v)) == v);
  }
  // smallest subnormal
  const double tiny = std::ldexp(1.0, -24);
  CHECK(half_to_double(double_to_half(tiny)) == tiny);
  // round-to-nearest-even at the halfway point
  CHECK(half_to_double(double_to_half(1.00048828125)) == 1.0);
  CHECK(half_to_double(double_to_half(1.0 + 3.0 / 2048.0)) == 1.001953125);
  // overflow saturates to infinity
  CHECK(std::isinf(half_to_double(double_to_half(1e6))));
  // relative error within half precision for in-range values
  Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(1e-3, 1e3) * rng.sign();
    const double back = half_to_double(double_to_half(v));
    CHECK(std::abs(back - v) <= std::abs(v) * 9.77e-4);
  }
}

TEST_CASE("NQMX matrix file round trip") {
  Rng rng(102);
  DenseMatrix m = random_matrix(rng, 7, 5);
  // snap to float32 so the round trip is exact
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<float>(m.data()[i]);
  }
  const std::string path = "test_roundtrip.nqmx";
  write_matrix_nqmx(path, m);
  const DenseMatrix back = read_matrix_nqmx(path);
  CHECK(back == m);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_matrix_nqmx("does_not_exist.nqmx"), IoError);
}

TEST_CASE("NQPK serialize / deserialize") {
  Rng rng(103);
  PackedModelFile model;
  for (int layer = 0; layer < 3; ++layer) {
    const std::size_t n = 3 + rng.index(40), m = 3 + rng.index(40);
    const std::size_t r = 1 + rng.index(33);
    std::vector<double> s1(n), s2(m);
    for (auto& s : s1) s = rng.uniform(0.1, 4.0);
    for (auto& s : s2) s = rng.uniform(0.1, 4.0);
    model.layers.push_back(
        {"layer_" + std::to_string(layer),
         make_factorized_layer(random_matrix(rng, n, r), random_matrix(rng, m, r),
                               s1, s2)});
  }
  const auto bytes = serialize_packed_model(model);
  const PackedModelFile back = deserialize_packed_model(bytes);
  REQUIRE(back.layers.size() == model.layers.size());
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& a = model.layers[k].layer;
    const auto& b = back.layers[k].layer;
    CHECK(model.layers[k].name == back.layers[k].name);
    CHECK(a.u.words == b.u.words);  // packed words are bit-exact
    CHECK(a.v.words == b.v.words);
    for (std::size_t i = 0; i < a.s1.size(); ++i) {
      CHECK(b.s1[i] == half_to_double(double_to_half(a.s1[i])));
    }
    for (std::size_t i = 0; i < a.s2.size(); ++i) {
      CHECK(b.s2[i] == half_to_double(double_to_half(a.s2[i])));
    }
  }
  // serializing the read-back reproduces the byte stream exactly
  CHECK(serialize_packed_model(back) == bytes);

  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(deserialize_packed_model(corrupt), ParseError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(deserialize_packed_model(truncated), ParseError);
}

TEST_CASE("pipeline end to end on an in-class layer") {
  Rng rng(104);
  const DenseMatrix w = nqtest::in_class_target(rng, 32, 32);
  const DenseMatrix calib = random_matrix(rng, 24, 32);

  PipelineConfig config;
  config.rank_policy.fixed_rank = 1;
  config.tune_post.epochs = 4;
  config.tune_global.epochs = 2;
  const PipelineResult result = run_pipeline({{"layer0", w}}, calib, config);

  REQUIRE(result.layers.size() == 1);
  CHECK(result.layers[0].rel_fro_error <= 1e-3);
  CHECK(result.layers[0].bpw ==
        bpw_nanoquant(32, 32, 1));
  CHECK(result.model_bpw == bpw_nanoquant(32, 32, 1));
  CHECK(result.layers[0].lagrangian_trace.size() >= 1);
  CHECK(result.final_kd_loss <= result.initial_kd_loss + 1e-12);

  // report BPW is the file's own payload accounting
  const double file_bits = static_cast<double>(result.model.payload_bits());
  CHECK(result.model_bpw == file_bits / (32.0 * 32.0));
}

TEST_CASE("pipeline two-layer chain with target BPW policy") {
  Rng rng(105);
  const DenseMatrix w0 = random_matrix(rng, 24, 16);
  const DenseMatrix w1 = random_matrix(rng, 12, 24);
  const DenseMatrix calib = random_matrix(rng, 20, 16);

  PipelineConfig config;
  config.rank_policy.target_bpw = 3.0;
  config.admm.max_iters = 150;
  config.tune_pre.epochs = 2;
  config.tune_post.epochs = 2;
  config.tune_global.epochs = 2;
  const PipelineResult result = run_pipeline({{"w0", w0}, {"w1", w1}}, calib, config);

  REQUIRE(result.layers.size() == 2);
  CHECK(result.layers[0].r == rank_for_target_bpw(24, 16, 3.0));
  CHECK(result.layers[1].r == rank_for_target_bpw(12, 24, 3.0));
  for (const auto& l : result.layers) {
    CHECK(l.bpw == bpw_nanoquant(l.n, l.m, l.r));
    CHECK(l.flip_ratio >= 0.0);
    CHECK(l.flip_ratio <= 1.0);
  }
}

TEST_CASE("pipeline rerun with the same seed is byte-identical") {
  Rng rng(106);
  const DenseMatrix w = random_matrix(rng, 16, 12);
  const DenseMatrix calib = random_matrix(rng, 10, 12);
  PipelineConfig config;
  config.rank_policy.fixed_rank = 2;
  config.admm.max_iters = 100;
  config.tune_pre.epochs = 2;
  config.tune_post.epochs = 2;
  config.tune_global.epochs = 1;
  config.seed = 7;
  const auto a = serialize_packed_model(run_pipeline({{"w", w}}, calib, config).model);
  const auto b = serialize_packed_model(run_pipeline({{"w", w}}, calib, config).model);
  CHECK(a == b);
}

TEST_CASE("pipeline failures carry the layer name and write nothing") {
  Rng rng(107);
  const DenseMatrix w0 = random_matrix(rng, 8, 6);
  const DenseMatrix w1 = random_matrix(rng, 5, 9);  // does not compose with w0
  const DenseMatrix calib = random_matrix(rng, 4, 6);
  PipelineConfig config;
  config.rank_policy.fixed_rank = 1;
  CHECK_THROWS_AS(run_pipeline({{"a", w0}, {"b", w1}}, calib, config),
                  DimensionMismatch);

  // rank too large for the layer is reported against it
  PipelineConfig big;
  big.rank_policy.fixed_rank = 32;
  try {
    run_pipeline({{"only", w0}}, calib, big);
    FAIL("expected PipelineError");
  } catch (const PipelineError& e) {
    CHECK(e.layer == "only");
  }

  PipelineConfig none;
  CHECK_THROWS_AS(run_pipeline({{"w", w0}}, calib, none), PipelineError);
}

TEST_CASE("pipeline calib dimension is validated") {
  Rng rng(108);
  const DenseMatrix w = random_matrix(rng, 8, 6);
  const DenseMatrix calib = random_matrix(rng, 4, 7);
  PipelineConfig config;
  config.rank_policy.fixed_rank = 1;
  CHECK_THROWS_AS(run_pipeline({{"w", w}}, calib, config), DimensionMismatch);
}
