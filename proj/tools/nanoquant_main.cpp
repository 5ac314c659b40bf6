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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nanoquant/pipeline.hpp"
#include "nanoquant/rng.hpp"

namespace nq = nanoquant;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct MethodSpec {
  bool factorized = false;  // nanoquant / dbf take a rank
  bool dbf = false;
  nq::BaselineParams params;
};

MethodSpec parse_method(const std::string& name) {
  MethodSpec spec;
  if (name == "nanoquant") {
    spec.factorized = true;
    return spec;
  }
  if (name == "dbf") {
    spec.factorized = true;
    spec.dbf = true;
    return spec;
  }
  static const std::map<std::string, std::pair<nq::BaselineMethod, std::pair<int, int>>>
      kMap = {
          {"billm", {nq::BaselineMethod::kBiLlm, {0, 0}}},
          {"stbllm-4:8", {nq::BaselineMethod::kStbLlm, {4, 8}}},
          {"stbllm-6:8", {nq::BaselineMethod::kStbLlm, {6, 8}}},
          {"stbllm-8:8", {nq::BaselineMethod::kStbLlm, {8, 8}}},
          {"arb-rc", {nq::BaselineMethod::kArbLlmRC, {0, 0}}},
          {"hbllm-row", {nq::BaselineMethod::kHbllmRow, {0, 0}}},
          {"hbllm-col", {nq::BaselineMethod::kHbllmCol, {0, 0}}},
      };
  const auto it = kMap.find(name);
  if (it == kMap.end()) {
    throw nq::UnsupportedMethod("unknown method '" + name + "'");
  }
  spec.params.method = it->second.first;
  if (it->second.second.first > 0) {
    spec.params.sparsity_n = static_cast<std::uint64_t>(it->second.second.first);
    spec.params.sparsity_m = static_cast<std::uint64_t>(it->second.second.second);
  }
  return spec;
}

json report_to_json(const nq::BpwReport& r) {
  return json{{"total_bits", r.total_bits},
              {"bpw", r.bpw},
              {"size_ratio", r.size_ratio},
              {"total_bytes", r.total_bytes},
              {"gigabytes_decimal", r.gigabytes_decimal},
              {"gibibytes_binary", r.gibibytes_binary}};
}

int cmd_factorize(const std::vector<std::string>& inputs, const std::string& calib_path,
                  int rank, double target_bpw, double gamma, double percentile,
                  int admm_iters, std::uint64_t seed, const std::string& output,
                  const std::string& report_path) {
  if ((rank > 0) == (target_bpw > 0)) {
    throw nq::Error(nq::ErrorKind::kValidation,
                    "give exactly one of --rank / --target-bpw");
  }
  std::vector<std::pair<std::string, nq::DenseMatrix>> weights;
  for (const std::string& path : inputs) {
    std::string name = path;
    const std::size_t slash = name.find_last_of('/');
    if (slash != std::string::npos) name = name.substr(slash + 1);
    const std::size_t dot = name.rfind('.');
    if (dot != std::string::npos) name = name.substr(0, dot);
    weights.emplace_back(name, nq::read_matrix_nqmx(path));
  }
  const nq::DenseMatrix calib = nq::read_matrix_nqmx(calib_path);

  nq::PipelineConfig config;
  if (rank > 0) {
    config.rank_policy.fixed_rank = static_cast<std::uint32_t>(rank);
  } else {
    config.rank_policy.target_bpw = target_bpw;
  }
  config.admm.max_iters = admm_iters;
  config.admm.seed = seed;
  config.gamma = gamma;
  config.percentile = percentile;
  config.seed = seed;
  config.tune_pre.seed = seed;
  config.tune_post.seed = seed;
  config.tune_global.seed = seed;

  const nq::PipelineResult result = nq::run_pipeline(weights, calib, config);
  nq::write_packed_model(output, result.model);

  json report;
  report["model_bpw"] = result.model_bpw;
  report["initial_kd_loss"] = result.initial_kd_loss;
  report["final_kd_loss"] = result.final_kd_loss;
  report["layers"] = json::array();
  for (const auto& l : result.layers) {
    report["layers"].push_back({{"name", l.name},
                                {"n", l.n},
                                {"m", l.m},
                                {"rank", l.r},
                                {"rel_fro_error", l.rel_fro_error},
                                {"flip_ratio", l.flip_ratio},
                                {"bpw", l.bpw},
                                {"admm_converged", l.admm_converged},
                                {"lagrangian_trace", l.lagrangian_trace}});
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report.dump(2) << "\n";
  } else {
    std::cout << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& vector_in,
              const std::string& out_path, bool batch) {
  const nq::PackedModelFile model = nq::read_packed_model(model_path);
  nq::DenseMatrix x = nq::read_matrix_nqmx(vector_in);
  if (!batch && x.cols() != 1) {
    throw nq::DimensionMismatch("--vector-in must be a single column without --batch");
  }
  for (const auto& named : model.layers) {
    x = nq::gemm_packed(named.layer, x);
  }
  nq::write_matrix_nqmx(out_path, x);
  return 0;
}

int cmd_bpw(const std::string& shape_path, const std::string& method_name,
            std::uint64_t c, std::uint64_t k, const std::string& nm, int rank,
            const std::string& units, bool table) {
  const bool binary_units = units != "decimal";
  auto size_of = [&](const nq::BpwReport& r) {
    return binary_units ? r.gibibytes_binary : r.gigabytes_decimal;
  };

  if (!nm.empty()) {  // single layer mode
    std::uint64_t n = 0, m = 0;
    if (std::sscanf(nm.c_str(), "%lu,%lu", &n, &m) != 2) {
      throw nq::ParseError("--nm expects `n,m`");
    }
    MethodSpec spec = parse_method(method_name);
    double bpw;
    if (spec.factorized) {
      if (rank <= 0) throw nq::InvalidRank("--rank required for factorized methods");
      bpw = spec.dbf ? nq::bpw_dbf(n, m, static_cast<std::uint64_t>(rank))
                     : nq::bpw_nanoquant(n, m, static_cast<std::uint64_t>(rank));
    } else {
      spec.params.c = c;
      spec.params.k = k;
      bpw = nq::bpw_baseline(spec.params, n, m);
    }
    std::cout << json{{"method", method_name}, {"n", n}, {"m", m}, {"bpw", bpw}}.dump(2)
              << "\n";
    return 0;
  }

  if (shape_path.empty()) {
    throw nq::Error(nq::ErrorKind::kValidation, "need --shape-config or --nm");
  }
  const nq::ModelShape shape = nq::read_shape_config(shape_path);

  if (table) {
    // bounds table over c in {0, 50}, CSV
    std::cout << "method,bpw_min,bpw_max,size_min,size_max,units\n";
    const char* unit_name = binary_units ? "GiB" : "GB";
    const std::vector<std::pair<std::string, MethodSpec>> methods = {
        {"nanoquant", parse_method("nanoquant")},
        {"billm", parse_method("billm")},
        {"stbllm-4:8", parse_method("stbllm-4:8")},
        {"stbllm-6:8", parse_method("stbllm-6:8")},
        {"stbllm-8:8", parse_method("stbllm-8:8")},
        {"arb-rc", parse_method("arb-rc")},
        {"hbllm-row", parse_method("hbllm-row")},
    };
    for (auto [name, spec] : methods) {
      nq::BpwReport lo, hi;
      if (spec.factorized) {
        nq::RankPolicy policy;
        if (rank > 0) {
          policy.fixed_rank = static_cast<std::uint32_t>(rank);
        } else {
          policy.target_bpw = 1.0;
        }
        lo = hi = nq::model_report_nanoquant(shape, policy);
      } else {
        spec.params.k = k;
        spec.params.c = 0;
        lo = nq::model_report_baseline(shape, spec.params);
        spec.params.c = 50;
        hi = nq::model_report_baseline(shape, spec.params);
      }
      std::printf("%s,%.2f,%.2f,%.2f,%.2f,%s\n", name.c_str(), lo.bpw, hi.bpw,
                  size_of(lo), size_of(hi), unit_name);
    }
    return 0;
  }

  MethodSpec spec = parse_method(method_name);
  nq::BpwReport report;
  if (spec.factorized) {
    nq::RankPolicy policy;
    if (rank > 0) {
      policy.fixed_rank = static_cast<std::uint32_t>(rank);
    } else {
      policy.target_bpw = 1.0;
    }
    report = spec.dbf ? nq::model_report_dbf(shape, policy)
                      : nq::model_report_nanoquant(shape, policy);
  } else {
    spec.params.c = c;
    spec.params.k = k;
    report = nq::model_report_baseline(shape, spec.params);
  }
  json out = report_to_json(report);
  out["method"] = method_name;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_verify(const std::string& model_path) {
  const nq::PackedModelFile model = nq::read_packed_model(model_path);
  bool ok = true;
  for (const auto& named : model.layers) {
    const nq::FactorizedLayer& layer = named.layer;
    // round-trip: unpack -> repack must reproduce the words bit for bit
    const nq::DenseMatrix u_signs = nq::unpack_signs(layer.u);
    const nq::DenseMatrix v_signs = nq::unpack_signs(layer.v);
    const bool words_ok = nq::pack_signs(u_signs).words == layer.u.words &&
                          nq::pack_signs(v_signs).words == layer.v.words;
    // gemv against the materialized reconstruction
    const nq::DenseMatrix dense = nq::reconstruct_dense(layer);
    std::vector<double> x(layer.m);
    nq::Rng rng(0xC0FFEE ^ layer.n ^ (static_cast<std::uint64_t>(layer.m) << 20));
    for (auto& v : x) v = rng.gaussian();
    const std::vector<double> y = nq::gemv_packed(layer, x);
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < layer.n; ++i) {
      double yd = 0.0;
      for (std::size_t j = 0; j < layer.m; ++j) yd += dense(i, j) * x[j];
      err += (yd - y[i]) * (yd - y[i]);
      norm += yd * yd;
    }
    const bool gemv_ok = err <= 1e-20 * (1.0 + norm);
    std::printf("%-24s words=%s gemv=%s\n", named.name.c_str(),
                words_ok ? "ok" : "FAIL", gemv_ok ? "ok" : "FAIL");
    ok = ok && words_ok && gemv_ok;
  }
  if (!ok) throw nq::Error(nq::ErrorKind::kNumerical, "verification failed");
  return 0;
}

int cmd_bench(const std::string& model_path, std::uint64_t n, std::uint64_t m,
              int rank, int iters, const std::string& out_path) {
  std::vector<nq::NamedFactorizedLayer> layers;
  if (!model_path.empty()) {
    layers = nq::read_packed_model(model_path).layers;
  } else {
    nq::Rng rng(42);
    nq::DenseMatrix lu(n, static_cast<std::size_t>(rank));
    nq::DenseMatrix lv(m, static_cast<std::size_t>(rank));
    for (std::size_t i = 0; i < lu.size(); ++i) lu.data()[i] = rng.gaussian();
    for (std::size_t i = 0; i < lv.size(); ++i) lv.data()[i] = rng.gaussian();
    std::vector<double> s1(n, 1.0), s2(m, 1.0);
    layers.push_back({"synthetic", nq::make_factorized_layer(lu, lv, s1, s2)});
  }
  std::FILE* out = stdout;
  if (!out_path.empty()) {
    out = std::fopen(out_path.c_str(), "w");
    if (out == nullptr) throw nq::IoError("cannot open " + out_path);
  }
  std::fprintf(out, "layer,n,m,r,packed_us,dense_us,speedup,packed_bytes,dense_bytes\n");
  for (const auto& named : layers) {
    const nq::FactorizedLayer& layer = named.layer;
    nq::Rng rng(7);
    std::vector<double> x(layer.m);
    for (auto& v : x) v = rng.gaussian();
    const nq::DenseMatrix dense = nq::reconstruct_dense(layer);
    std::vector<double> y(layer.n);

    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    for (int i = 0; i < iters; ++i) y = nq::gemv_packed(layer, x);
    auto t1 = clock::now();
    for (int i = 0; i < iters; ++i) {
      for (std::size_t row = 0; row < layer.n; ++row) {
        double acc = 0.0;
        const double* d = dense.row(row);
        for (std::size_t j = 0; j < layer.m; ++j) acc += d[j] * x[j];
        y[row] = acc;
      }
    }
    auto t2 = clock::now();
    const double packed_us =
        std::chrono::duration<double, std::micro>(t1 - t0).count() / iters;
    const double dense_us =
        std::chrono::duration<double, std::micro>(t2 - t1).count() / iters;
    const std::uint64_t packed_bytes = layer.payload_bits() / 8;
    const std::uint64_t dense_bytes = static_cast<std::uint64_t>(layer.n) * layer.m * 4;
    std::fprintf(out, "%s,%u,%u,%u,%.2f,%.2f,%.2fx,%llu,%llu\n", named.name.c_str(),
                 layer.n, layer.m, layer.r, packed_us, dense_us,
                 dense_us / packed_us,
                 static_cast<unsigned long long>(packed_bytes),
                 static_cast<unsigned long long>(dense_bytes));
  }
  if (out != stdout) std::fclose(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sub-1-bit low-rank binary weight compression toolkit"};
  app.require_subcommand(1);

  // factorize
  auto* fact = app.add_subcommand("factorize", "compress dense weights to a packed model");
  std::vector<std::string> inputs;
  std::string calib_path, output = "model.nqpk", report_path;
  int rank = 0, admm_iters = 400;
  double target_bpw = 0.0, gamma = 0.2, percentile = 0.99;
  std::uint64_t seed = 0;
  fact->add_option("--input", inputs, "weight matrices (.nqmx), chain order")->required();
  fact->add_option("--calib", calib_path, "calibration samples (.nqmx, samples x dim)")
      ->required();
  fact->add_option("--rank", rank, "fixed factorization rank");
  fact->add_option("--target-bpw", target_bpw, "bits-per-weight target per layer");
  fact->add_option("--gamma", gamma, "diagonal shrinkage in [0,1]");
  fact->add_option("--percentile", percentile, "tau clipping percentile");
  fact->add_option("--admm-iters", admm_iters, "solver iterations");
  fact->add_option("--seed", seed, "pipeline seed");
  fact->add_option("--output", output, "output .nqpk path");
  fact->add_option("--report", report_path, "metrics JSON path (default stdout)");

  // infer
  auto* infer = app.add_subcommand("infer", "run packed inference");
  std::string model_path, vector_in, vector_out = "out.nqmx";
  bool batch = false;
  infer->add_option("--model", model_path, "packed model (.nqpk)")->required();
  infer->add_option("--vector-in", vector_in, "input vector/matrix (.nqmx)")->required();
  infer->add_option("--out", vector_out, "output path (.nqmx)");
  infer->add_flag("--batch", batch, "treat input columns as a batch");

  // bpw
  auto* bpw = app.add_subcommand("bpw", "storage accounting reports");
  std::string shape_path, method = "nanoquant", nm, units = "binary";
  std::uint64_t c = 0, k = 128;
  int bpw_rank = 0;
  bool table = false;
  bpw->add_option("--shape-config", shape_path, "model shape file");
  bpw->add_option("--method", method,
                  "nanoquant|dbf|billm|stbllm-4:8|stbllm-6:8|stbllm-8:8|arb-rc|"
                  "hbllm-row|hbllm-col");
  bpw->add_option("--c", c, "salient columns (<= 50)");
  bpw->add_option("--k", k, "block size");
  bpw->add_option("--nm", nm, "single layer `n,m` instead of a shape config");
  bpw->add_option("--rank", bpw_rank, "rank for factorized methods");
  bpw->add_option("--units", units, "decimal|binary size units");
  bpw->add_flag("--table", table, "emit the bounds table as CSV");

  // verify
  auto* verify = app.add_subcommand("verify", "check a packed model file");
  std::string verify_model;
  verify->add_option("--model", verify_model, "packed model (.nqpk)")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "gemv throughput vs dense baseline");
  std::string bench_model, bench_out;
  std::uint64_t bench_n = 1024, bench_m = 1024;
  int bench_rank = 64, bench_iters = 50;
  bench->add_option("--model", bench_model, "packed model (.nqpk)");
  bench->add_option("--n", bench_n, "rows for synthetic layer");
  bench->add_option("--m", bench_m, "cols for synthetic layer");
  bench->add_option("--rank", bench_rank, "rank for synthetic layer");
  bench->add_option("--iters", bench_iters, "repetitions per layer");
  bench->add_option("--out", bench_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fact->parsed()) {
      return cmd_factorize(inputs, calib_path, rank, target_bpw, gamma, percentile,
                           admm_iters, seed, output, report_path);
    }
    if (infer->parsed()) return cmd_infer(model_path, vector_in, vector_out, batch);
    if (bpw->parsed()) return cmd_bpw(shape_path, method, c, k, nm, bpw_rank, units, table);
    if (verify->parsed()) return cmd_verify(verify_model);
    if (bench->parsed()) {
      return cmd_bench(bench_model, bench_n, bench_m, bench_rank, bench_iters, bench_out);
    }
  } catch (const nq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == nq::ErrorKind::kValidation ? kExitValidation : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
