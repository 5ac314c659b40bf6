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

#include "nanoquant/pipeline.hpp"

#include <optional>
#include <utility>

#include "nanoquant/balance.hpp"
#include "nanoquant/precondition.hpp"

namespace nanoquant {

namespace {

ToyChain single_layer_chain(Layer layer) {
  ToyChain chain;
  chain.layers.push_back(std::move(layer));
  return chain;
}

}  // namespace

PipelineResult run_pipeline(const std::vector<std::pair<std::string, DenseMatrix>>& weights,
                            const DenseMatrix& calib, const PipelineConfig& config) {
  if (weights.empty()) {
    throw Error(ErrorKind::kValidation, "pipeline: no weights given");
  }
  if (calib.rows() == 0) {
    throw Error(ErrorKind::kValidation, "pipeline: empty calibration set");
  }
  if (calib.cols() != weights.front().second.cols()) {
    throw DimensionMismatch("pipeline: calib column dim != first layer input dim");
  }

  // full-precision reference chain and the working chain
  ToyChain reference;
  for (const auto& [name, w] : weights) {
    if (!w.is_finite()) throw NonFiniteInput("pipeline: weight " + name);
    reference.layers.push_back(DenseLayer{w});
  }
  for (std::size_t k = 0; k + 1 < reference.layers.size(); ++k) {
    if (layer_output_dim(reference.layers[k]) !=
        layer_input_dim(reference.layers[k + 1])) {
      throw DimensionMismatch("pipeline: weights do not compose at layer " +
                              weights[k + 1].first);
    }
  }
  ToyChain work = reference;
  const DenseMatrix x = calib.transposed();  // inputs as columns

  // Phase 1: per-layer input statistics from the full-precision chain
  std::vector<Preconditioner> preconditioners;
  preconditioners.reserve(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const DenseMatrix acts = forward_prefix(reference, x, k);  // m_k x samples
    ChannelStats stats(acts.rows());
    accumulate_stats(stats, acts.transposed(), config.percentile);
    preconditioners.push_back(
        build_preconditioner(stats, std::nullopt, config.gamma, config.eps_floor));
  }

  PipelineResult result;

  // Phase 2: sequential per-layer reconstruction
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const std::string& name = weights[k].first;
    try {
      const DenseMatrix x_hat = forward_prefix(work, x, k);       // student input
      const DenseMatrix teacher = forward_prefix(reference, x, k + 1);

      // Step 1: absorb upstream quantization error into the dense weight
      {
        ToyChain group = single_layer_chain(work.layers[k]);
        TuneConfig pre = config.tune_pre;
        pre.seed ^= config.seed + k;
        group = mitigate_error_propagation(group, x_hat, teacher, pre);
        work.layers[k] = group.layers[0];
      }
      const DenseMatrix& tuned_w = std::get<DenseLayer>(work.layers[k]).w;

      // Step 2: precondition, factorize, balance
      const Preconditioner& pre = preconditioners[k];
      const DenseMatrix target = precondition_weight(tuned_w, pre);
      AdmmConfig admm = config.admm;
      if (config.rank_policy.fixed_rank) {
        admm.rank = *config.rank_policy.fixed_rank;
      } else if (config.rank_policy.target_bpw) {
        admm.rank = rank_for_target_bpw(tuned_w.rows(), tuned_w.cols(),
                                        *config.rank_policy.target_bpw);
      } else {
        throw Error(ErrorKind::kValidation, "pipeline: rank policy unset");
      }
      if (admm.rank > std::min(tuned_w.rows(), tuned_w.cols())) {
        throw RankTooLarge("pipeline: configured rank exceeds layer dims");
      }
      AdmmResult admm_result = admm_factorize(target, admm);
      BalancedLatents latents = balance_and_extract_scales(
          admm_result.consensus_u, admm_result.consensus_v, pre, config.scale_floor);

      LayerMetrics metrics;
      metrics.name = name;
      metrics.n = static_cast<std::uint32_t>(tuned_w.rows());
      metrics.m = static_cast<std::uint32_t>(tuned_w.cols());
      metrics.r = admm.rank;
      metrics.admm_converged = admm_result.state.converged;
      metrics.lagrangian_trace = admm_result.state.lagrangian_trace;
      metrics.bpw = bpw_nanoquant(metrics.n, metrics.m, metrics.r);

      const DenseMatrix dense_before = tuned_w;
      const DenseMatrix signs_before_u = binarize(latents.latent_u);
      const DenseMatrix signs_before_v = binarize(latents.latent_v);

      work.layers[k] = FactorizedLatentLayer{latents.latent_u, latents.latent_v,
                                             latents.s1, latents.s2};

      // Step 3: STE refinement of the group
      {
        ToyChain group = single_layer_chain(work.layers[k]);
        TuneConfig post = config.tune_post;
        post.seed ^= config.seed + 0x5157u + k;
        group = ste_refine(group, x_hat, teacher, post);
        work.layers[k] = group.layers[0];
      }
      const auto& refined = std::get<FactorizedLatentLayer>(work.layers[k]);

      // flip ratio pooled over both latent factors
      {
        const DenseMatrix after_u = binarize(refined.latent_u);
        const DenseMatrix after_v = binarize(refined.latent_v);
        const double fu = flip_ratio(signs_before_u, after_u);
        const double fv = flip_ratio(signs_before_v, after_v);
        const double total = static_cast<double>(signs_before_u.size() + signs_before_v.size());
        metrics.flip_ratio =
            (fu * static_cast<double>(signs_before_u.size()) +
             fv * static_cast<double>(signs_before_v.size())) / total;
      }

      FactorizedLayer packed = make_factorized_layer(refined.latent_u, refined.latent_v,
                                                     refined.s1, refined.s2);
      metrics.rel_fro_error =
          relative_frobenius_error(dense_before, reconstruct_dense(packed));
      result.model.layers.push_back({name, std::move(packed)});
      result.layers.push_back(std::move(metrics));
    } catch (const PipelineError&) {
      throw;
    } catch (const Error& e) {
      throw PipelineError(name, e);
    }
  }

  // Phase 3: scale-only distillation across the whole chain
  try {
    TuneConfig global = config.tune_global;
    global.seed ^= config.seed + 0x9D1Bu;
    const DenseMatrix teacher_logits = forward_chain(reference, x);
    result.initial_kd_loss = kd_chain_loss(work, teacher_logits, x);
    work = tune_scales_kd(work, reference, x, global);
    result.final_kd_loss = kd_chain_loss(work, teacher_logits, x);
  } catch (const Error& e) {
    throw PipelineError("<model-reconstruction>", e);
  }

  // fold the tuned scales back into the packed records; words stay frozen
  for (std::size_t k = 0; k < result.model.layers.size(); ++k) {
    const auto& refined = std::get<FactorizedLatentLayer>(work.layers[k]);
    result.model.layers[k].layer.s1 = refined.s1;
    result.model.layers[k].layer.s2 = refined.s2;
  }

  double total_bits = 0.0, total_params = 0.0;
  for (const auto& named : result.model.layers) {
    total_bits += static_cast<double>(named.layer.payload_bits());
    total_params += static_cast<double>(named.layer.n) * named.layer.m;
  }
  result.model_bpw = total_bits / total_params;
  return result;
}

}  // namespace nanoquant
