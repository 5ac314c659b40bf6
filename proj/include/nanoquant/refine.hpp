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

#ifndef NANOQUANT_REFINE_HPP
#define NANOQUANT_REFINE_HPP

#include <cstdint>
#include <variant>
#include <vector>

#include "nanoquant/dense.hpp"

namespace nanoquant {

struct DenseLayer {
  DenseMatrix w;  // out x in
};

// Continuous latents with scales; the forward pass hard-binarizes:
//   y = s1 .* ( sign(latent_u) ( sign(latent_v)^T (s2 .* x) ) ).
struct FactorizedLatentLayer {
  DenseMatrix latent_u;  // n x r
  DenseMatrix latent_v;  // m x r
  std::vector<double> s1;
  std::vector<double> s2;
};

using Layer = std::variant<DenseLayer, FactorizedLatentLayer>;

enum class Activation { kNone, kRelu };

// A short stack of linear maps with an optional elementwise ReLU between
// consecutive layers (never after the last).
struct ToyChain {
  std::vector<Layer> layers;
  Activation activation = Activation::kNone;
};

std::size_t layer_input_dim(const Layer& layer);
std::size_t layer_output_dim(const Layer& layer);

enum class LrSchedule { kConstant, kCosine };

struct TuneConfig {
  int epochs = 8;
  double learning_rate = 1e-4;
  int batch_size = 4;
  LrSchedule schedule = LrSchedule::kCosine;
  std::uint64_t seed = 0;
  // Optional per-column loss weights for the Frobenius objectives; empty
  // means uniform.
  std::vector<double> column_weights;
};

// inputs as columns: X is (input dim) x (batch)
DenseMatrix forward_chain(const ToyChain& chain, const DenseMatrix& x);
// outputs after the first `layer_count` layers (with activations applied
// between them, none after the cut)
DenseMatrix forward_prefix(const ToyChain& chain, const DenseMatrix& x,
                           std::size_t layer_count);

// Divergence detected while tuning; carries the last finite checkpoint.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::string what, ToyChain best)
      : Error(ErrorKind::kNumerical, std::move(what)), best_chain(std::move(best)) {}
  ToyChain best_chain;
};

// Joint Adam refinement of latents and scales of every factorized layer
// against || teacher - forward(chain, X) ||_F^2, passing gradients through
// sign() as identity. Dense layers are frozen. Returns the best-loss
// checkpoint over epochs, never worse than the input.
ToyChain ste_refine(const ToyChain& chain, const DenseMatrix& x,
                    const DenseMatrix& teacher_outputs, const TuneConfig& config);

// Same objective, but only DenseLayer weights move; factorized layers are
// frozen. Throws NoTunableLayers when the chain has no dense layer.
ToyChain mitigate_error_propagation(const ToyChain& chain, const DenseMatrix& x,
                                    const DenseMatrix& teacher_outputs,
                                    const TuneConfig& config);

// Scale-only distillation: KL(softmax(teacher) || softmax(student)) summed
// over columns, temperature 1. Latents and dense weights stay bit-identical.
ToyChain tune_scales_kd(const ToyChain& student, const ToyChain& teacher,
                        const DenseMatrix& x, const TuneConfig& config);

double mse_chain_loss(const ToyChain& chain, const DenseMatrix& x,
                      const DenseMatrix& teacher_outputs,
                      const std::vector<double>& column_weights = {});
double kd_chain_loss(const ToyChain& student, const DenseMatrix& teacher_logits,
                     const DenseMatrix& x);

// Fraction of entries whose sign changed, sign(0) = +1.
double flip_ratio(const DenseMatrix& before, const DenseMatrix& after);

}  // namespace nanoquant

#endif  // NANOQUANT_REFINE_HPP
