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

#include "nanoquant/refine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "nanoquant/packed.hpp"
#include "nanoquant/rng.hpp"

namespace nanoquant {

std::size_t layer_input_dim(const Layer& layer) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->w.cols();
  return std::get<FactorizedLatentLayer>(layer).latent_v.rows();
}

std::size_t layer_output_dim(const Layer& layer) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->w.rows();
  return std::get<FactorizedLatentLayer>(layer).latent_u.rows();
}

namespace {

void check_chain(const ToyChain& chain, const DenseMatrix& x) {
  if (chain.layers.empty()) {
    throw Error(ErrorKind::kValidation, "chain has no layers");
  }
  if (x.rows() != layer_input_dim(chain.layers.front())) {
    throw DimensionMismatch("chain input dim does not match X rows");
  }
  for (std::size_t k = 0; k + 1 < chain.layers.size(); ++k) {
    if (layer_output_dim(chain.layers[k]) != layer_input_dim(chain.layers[k + 1])) {
      throw DimensionMismatch("consecutive chain layers do not compose");
    }
  }
}

DenseMatrix col_slice(const DenseMatrix& m, std::size_t c0, std::size_t c1) {
  DenseMatrix out(m.rows(), c1 - c0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* src = m.row(i);
    double* dst = out.row(i);
    for (std::size_t c = c0; c < c1; ++c) dst[c - c0] = src[c];
  }
  return out;
}

// row-broadcast scale: out(i,:) = s[i] * m(i,:)
DenseMatrix row_scaled(const DenseMatrix& m, const std::vector<double>& s) {
  DenseMatrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = out.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] *= s[i];
  }
  return out;
}

struct FactCache {
  DenseMatrix bu, bv;  // hard signs of the latents
  DenseMatrix x1;      // s2 .* x
  DenseMatrix t;       // Bv^T x1
  DenseMatrix z;       // Bu t
};

struct Tape {
  std::vector<DenseMatrix> inputs;   // input of each layer
  std::vector<DenseMatrix> preact;   // output before the inter-layer ReLU
  std::vector<FactCache> fact;       // per-layer cache (empty for dense)
  DenseMatrix output;
};

DenseMatrix layer_forward(const Layer& layer, const DenseMatrix& x, FactCache* cache) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    return matmul(d->w, x);
  }
  const auto& f = std::get<FactorizedLatentLayer>(layer);
  FactCache local;
  FactCache& c = cache ? *cache : local;
  c.bu = binarize(f.latent_u);
  c.bv = binarize(f.latent_v);
  c.x1 = row_scaled(x, f.s2);
  c.t = matmul_at_b(c.bv, c.x1);
  c.z = matmul(c.bu, c.t);
  return row_scaled(c.z, f.s1);
}

Tape forward_tape(const ToyChain& chain, const DenseMatrix& x) {
  Tape tape;
  tape.inputs.reserve(chain.layers.size());
  tape.preact.reserve(chain.layers.size());
  tape.fact.resize(chain.layers.size());
  DenseMatrix a = x;
  for (std::size_t k = 0; k < chain.layers.size(); ++k) {
    tape.inputs.push_back(a);
    DenseMatrix y = layer_forward(chain.layers[k], a, &tape.fact[k]);
    tape.preact.push_back(y);
    if (k + 1 < chain.layers.size() && chain.activation == Activation::kRelu) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (y.data()[i] < 0.0) y.data()[i] = 0.0;
      }
    }
    a = std::move(y);
  }
  tape.output = tape.preact.back();
  return tape;
}

struct LayerGrads {
  DenseMatrix w;
  DenseMatrix latent_u, latent_v;
  std::vector<double> s1, s2;
};

// Reverse pass from g = dLoss/d(output). Latent gradients treat d sign/dx as
// identity (unclipped straight-through).
std::vector<LayerGrads> backward(const ToyChain& chain, const Tape& tape,
                                 DenseMatrix g) {
  std::vector<LayerGrads> grads(chain.layers.size());
  for (std::size_t k = chain.layers.size(); k-- > 0;) {
    const Layer& layer = chain.layers[k];
    const DenseMatrix& a = tape.inputs[k];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      grads[k].w = matmul(g, a.transposed());
      if (k > 0) g = matmul_at_b(d->w, g);
    } else {
      const auto& f = std::get<FactorizedLatentLayer>(layer);
      const FactCache& c = tape.fact[k];
      LayerGrads& gr = grads[k];
      gr.s1.assign(f.s1.size(), 0.0);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        const double* grow = g.row(i);
        const double* zrow = c.z.row(i);
        double s = 0.0;
        for (std::size_t cc = 0; cc < g.cols(); ++cc) s += grow[cc] * zrow[cc];
        gr.s1[i] = s;
      }
      const DenseMatrix dz = row_scaled(g, f.s1);
      gr.latent_u = matmul(dz, c.t.transposed());
      const DenseMatrix dt = matmul_at_b(c.bu, dz);
      gr.latent_v = matmul(c.x1, dt.transposed());
      const DenseMatrix dx1 = matmul(c.bv, dt);
      gr.s2.assign(f.s2.size(), 0.0);
      for (std::size_t j = 0; j < a.rows(); ++j) {
        const double* drow = dx1.row(j);
        const double* arow = a.row(j);
        double s = 0.0;
        for (std::size_t cc = 0; cc < a.cols(); ++cc) s += drow[cc] * arow[cc];
        gr.s2[j] = s;
      }
      if (k > 0) g = row_scaled(dx1, f.s2);
    }
    if (k > 0 && chain.activation == Activation::kRelu) {
      const DenseMatrix& pre = tape.preact[k - 1];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pre.data()[i] <= 0.0) g.data()[i] = 0.0;
      }
    }
  }
  return grads;
}

struct AdamBuf {
  std::vector<double> m, v;
};

void adam_step(double* param, const double* grad, std::size_t len, AdamBuf& buf,
               double lr, long t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (buf.m.size() != len) {
    buf.m.assign(len, 0.0);
    buf.v.assign(len, 0.0);
  }
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < len; ++i) {
    buf.m[i] = b1 * buf.m[i] + (1.0 - b1) * grad[i];
    buf.v[i] = b2 * buf.v[i] + (1.0 - b2) * grad[i] * grad[i];
    param[i] -= lr * (buf.m[i] / c1) / (std::sqrt(buf.v[i] / c2) + eps);
  }
}

enum class TuneMode { kLatentsAndScales, kDenseOnly, kScalesOnly };

double weighted_mse(const DenseMatrix& teacher, const DenseMatrix& out,
                    const std::vector<double>& w, std::size_t col_offset) {
  double loss = 0.0;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double* trow = teacher.row(i);
    const double* orow = out.row(i);
    for (std::size_t c = 0; c < out.cols(); ++c) {
      const double wc = w.empty() ? 1.0 : w[col_offset + c];
      const double d = trow[c] - orow[c];
      loss += wc * d * d;
    }
  }
  return loss;
}

void softmax_col(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

// KL(p || q) summed over columns plus dLoss/d(student logits) = q - p.
double kd_loss_grad(const DenseMatrix& teacher_logits, const DenseMatrix& student_logits,
                    DenseMatrix* grad_out) {
  const std::size_t n = teacher_logits.rows();
  const std::size_t b = teacher_logits.cols();
  std::vector<double> tcol(n), scol(n), p(n), q(n);
  if (grad_out) *grad_out = DenseMatrix(n, b);
  double loss = 0.0;
  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      tcol[i] = teacher_logits(i, c);
      scol[i] = student_logits(i, c);
    }
    softmax_col(tcol.data(), p.data(), n);
    softmax_col(scol.data(), q.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] > 0.0) loss += p[i] * (std::log(p[i]) - std::log(q[i]));
      if (grad_out) (*grad_out)(i, c) = q[i] - p[i];
    }
  }
  return loss;
}

struct TuneProblem {
  const DenseMatrix& x;
  const DenseMatrix& teacher;  // outputs for MSE, logits for KD
  const TuneConfig& config;
  TuneMode mode;
  bool kd = false;
};

double full_loss(const ToyChain& chain, const TuneProblem& p) {
  const DenseMatrix out = forward_chain(chain, p.x);
  if (p.kd) return kd_loss_grad(p.teacher, out, nullptr);
  return weighted_mse(p.teacher, out, p.config.column_weights, 0);
}

bool layer_tunable(const Layer& layer, TuneMode mode) {
  const bool dense = std::holds_alternative<DenseLayer>(layer);
  switch (mode) {
    case TuneMode::kDenseOnly: return dense;
    case TuneMode::kLatentsAndScales:
    case TuneMode::kScalesOnly: return !dense;
  }
  return false;
}

ToyChain run_tuning(const ToyChain& input, const TuneProblem& p) {
  check_chain(input, p.x);
  const std::size_t out_dim = layer_output_dim(input.layers.back());
  if (p.teacher.rows() != out_dim || p.teacher.cols() != p.x.cols()) {
    throw DimensionMismatch("teacher outputs do not match chain output shape");
  }
  if (!p.config.column_weights.empty() &&
      p.config.column_weights.size() != p.x.cols()) {
    throw DimensionMismatch("column weight count does not match batch");
  }
  if (p.config.epochs < 1 || p.config.learning_rate <= 0.0 || p.config.batch_size < 1) {
    throw Error(ErrorKind::kValidation, "invalid tuning config");
  }
  bool any_tunable = false;
  for (const Layer& l : input.layers) any_tunable |= layer_tunable(l, p.mode);
  if (!any_tunable && p.mode == TuneMode::kDenseOnly) {
    throw NoTunableLayers("mitigate_error_propagation: no dense layers");
  }

  ToyChain work = input;
  double best_loss = full_loss(work, p);
  if (!std::isfinite(best_loss)) {
    throw NonFiniteLoss("tuning: initial loss is not finite", input);
  }
  ToyChain best = work;

  // four Adam slots per layer: W/latent_u, latent_v, s1, s2
  std::vector<std::array<AdamBuf, 4>> buffers(work.layers.size());
  const std::size_t batch = static_cast<std::size_t>(p.config.batch_size);
  const std::size_t num_batches = (p.x.cols() + batch - 1) / batch;
  std::vector<std::size_t> order(num_batches);
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < p.config.epochs; ++epoch) {
    double lr = p.config.learning_rate;
    if (p.config.schedule == LrSchedule::kCosine) {
      lr *= 0.5 * (1.0 + std::cos(3.141592653589793 * epoch / p.config.epochs));
    }
    Rng rng(p.config.seed + static_cast<std::uint64_t>(epoch) * 0x9E37u);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    for (std::size_t bi : order) {
      const std::size_t c0 = bi * batch;
      const std::size_t c1 = std::min(c0 + batch, p.x.cols());
      const DenseMatrix xb = col_slice(p.x, c0, c1);
      const DenseMatrix tb = col_slice(p.teacher, c0, c1);
      Tape tape = forward_tape(work, xb);
      DenseMatrix g;
      if (p.kd) {
        kd_loss_grad(tb, tape.output, &g);
      } else {
        g = DenseMatrix(tape.output.rows(), tape.output.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t c = 0; c < g.cols(); ++c) {
            const double wc =
                p.config.column_weights.empty() ? 1.0 : p.config.column_weights[c0 + c];
            g(i, c) = 2.0 * wc * (tape.output(i, c) - tb(i, c));
          }
        }
      }
      std::vector<LayerGrads> grads = backward(work, tape, std::move(g));
      ++step;
      for (std::size_t k = 0; k < work.layers.size(); ++k) {
        if (!layer_tunable(work.layers[k], p.mode)) continue;
        if (auto* d = std::get_if<DenseLayer>(&work.layers[k])) {
          adam_step(d->w.data(), grads[k].w.data(), d->w.size(), buffers[k][0], lr, step);
        } else {
          auto& f = std::get<FactorizedLatentLayer>(work.layers[k]);
          if (p.mode == TuneMode::kLatentsAndScales) {
            adam_step(f.latent_u.data(), grads[k].latent_u.data(), f.latent_u.size(),
                      buffers[k][0], lr, step);
            adam_step(f.latent_v.data(), grads[k].latent_v.data(), f.latent_v.size(),
                      buffers[k][1], lr, step);
          }
          adam_step(f.s1.data(), grads[k].s1.data(), f.s1.size(), buffers[k][2], lr, step);
          adam_step(f.s2.data(), grads[k].s2.data(), f.s2.size(), buffers[k][3], lr, step);
        }
      }
    }
    const double loss = full_loss(work, p);
    if (!std::isfinite(loss)) {
      throw NonFiniteLoss("tuning diverged to a non-finite loss", best);
    }
    if (loss < best_loss) {
      best_loss = loss;
      best = work;
    }
  }
  return best;
}

}  // namespace

DenseMatrix forward_chain(const ToyChain& chain, const DenseMatrix& x) {
  check_chain(chain, x);
  DenseMatrix a = x;
  for (std::size_t k = 0; k < chain.layers.size(); ++k) {
    DenseMatrix y = layer_forward(chain.layers[k], a, nullptr);
    if (k + 1 < chain.layers.size() && chain.activation == Activation::kRelu) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (y.data()[i] < 0.0) y.data()[i] = 0.0;
      }
    }
    a = std::move(y);
  }
  return a;
}

DenseMatrix forward_prefix(const ToyChain& chain, const DenseMatrix& x,
                           std::size_t layer_count) {
  if (layer_count == 0) return x;
  if (layer_count > chain.layers.size()) {
    throw DimensionMismatch("forward_prefix: layer_count exceeds chain length");
  }
  ToyChain prefix;
  prefix.activation = chain.activation;
  prefix.layers.assign(chain.layers.begin(),
                       chain.layers.begin() + static_cast<std::ptrdiff_t>(layer_count));
  DenseMatrix out = forward_chain(prefix, x);
  // the inter-layer activation still applies between the prefix and the rest
  if (layer_count < chain.layers.size() && chain.activation == Activation::kRelu) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    }
  }
  return out;
}

ToyChain ste_refine(const ToyChain& chain, const DenseMatrix& x,
                    const DenseMatrix& teacher_outputs, const TuneConfig& config) {
  TuneProblem p{x, teacher_outputs, config, TuneMode::kLatentsAndScales, false};
  return run_tuning(chain, p);
}

ToyChain mitigate_error_propagation(const ToyChain& chain, const DenseMatrix& x,
                                    const DenseMatrix& teacher_outputs,
                                    const TuneConfig& config) {
  TuneProblem p{x, teacher_outputs, config, TuneMode::kDenseOnly, false};
  return run_tuning(chain, p);
}

ToyChain tune_scales_kd(const ToyChain& student, const ToyChain& teacher,
                        const DenseMatrix& x, const TuneConfig& config) {
  const DenseMatrix teacher_logits = forward_chain(teacher, x);
  TuneProblem p{x, teacher_logits, config, TuneMode::kScalesOnly, true};
  return run_tuning(student, p);
}

double mse_chain_loss(const ToyChain& chain, const DenseMatrix& x,
                      const DenseMatrix& teacher_outputs,
                      const std::vector<double>& column_weights) {
  const DenseMatrix out = forward_chain(chain, x);
  if (out.rows() != teacher_outputs.rows() || out.cols() != teacher_outputs.cols()) {
    throw DimensionMismatch("mse_chain_loss: teacher shape");
  }
  return weighted_mse(teacher_outputs, out, column_weights, 0);
}

double kd_chain_loss(const ToyChain& student, const DenseMatrix& teacher_logits,
                     const DenseMatrix& x) {
  const DenseMatrix out = forward_chain(student, x);
  if (out.rows() != teacher_logits.rows() || out.cols() != teacher_logits.cols()) {
    throw DimensionMismatch("kd_chain_loss: teacher shape");
  }
  return kd_loss_grad(teacher_logits, out, nullptr);
}

double flip_ratio(const DenseMatrix& before, const DenseMatrix& after) {
  if (before.rows() != after.rows() || before.cols() != after.cols()) {
    throw DimensionMismatch("flip_ratio: shapes differ");
  }
  if (before.size() == 0) return 0.0;
  std::size_t flips = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool sb = before.data()[i] < 0.0;
    const bool sa = after.data()[i] < 0.0;
    if (sb != sa) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(before.size());
}

}  // namespace nanoquant
