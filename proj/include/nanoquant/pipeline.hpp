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

#ifndef NANOQUANT_PIPELINE_HPP
#define NANOQUANT_PIPELINE_HPP

#include <string>
#include <vector>

#include "nanoquant/admm.hpp"
#include "nanoquant/io.hpp"
#include "nanoquant/refine.hpp"
#include "nanoquant/storage.hpp"

namespace nanoquant {

struct PipelineConfig {
  RankPolicy rank_policy;               // rank or target BPW, exactly one
  AdmmConfig admm;
  TuneConfig tune_pre;                  // dense error-propagation mitigation
  TuneConfig tune_post;                 // latent + scale STE refinement
  TuneConfig tune_global;               // scale-only distillation
  double gamma = 0.2;                   // shrinkage; 0.6 suits heavier-tailed stacks
  double percentile = 0.99;             // tau percentile
  double eps_floor = 1e-8;
  double scale_floor = 1e-12;
  std::uint64_t seed = 0;

  PipelineConfig() {
    tune_pre.learning_rate = 1e-4;
    tune_pre.batch_size = 4;
    tune_post.learning_rate = 1e-5;
    tune_post.batch_size = 1;
    tune_global.learning_rate = 1e-6;
    tune_global.batch_size = 1;
  }
};

struct LayerMetrics {
  std::string name;
  std::uint32_t n = 0, m = 0, r = 0;
  double rel_fro_error = 0.0;   // vs the dense weight that was factorized
  double flip_ratio = 0.0;      // latent signs, post-solver vs post-STE
  double bpw = 0.0;
  bool admm_converged = false;
  std::vector<double> lagrangian_trace;
};

struct PipelineResult {
  PackedModelFile model;
  std::vector<LayerMetrics> layers;
  double model_bpw = 0.0;
  double initial_kd_loss = 0.0;
  double final_kd_loss = 0.0;
};

class PipelineError : public Error {
 public:
  PipelineError(std::string layer_name, const Error& cause)
      : Error(cause.kind(), "layer '" + layer_name + "': " + cause.what()),
        layer(std::move(layer_name)) {}
  std::string layer;
};

// Sequential whole-pipeline run at desk scale, one layer per reconstruction
// group:
//   Phase 1  calibration statistics -> per-layer preconditioners
//   Phase 2  per layer: dense mitigation against the full-precision prefix
//            teacher, precondition, factorize, balance, STE-refine, pack
//   Phase 3  scale-only distillation of the packed chain against the
//            original chain; packed words are frozen
// calib holds calibration samples as rows (samples x input dim).
PipelineResult run_pipeline(const std::vector<std::pair<std::string, DenseMatrix>>& weights,
                            const DenseMatrix& calib, const PipelineConfig& config);

}  // namespace nanoquant

#endif  // NANOQUANT_PIPELINE_HPP
