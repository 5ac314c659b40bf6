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

#include "nanoquant/packed.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace nanoquant {

namespace {

std::atomic<unsigned> g_thread_budget{0};  // 0 = not yet read from env

unsigned read_env_threads() {
  const char* env = std::getenv("NQ_THREADS");
  if (env == nullptr) return 1;
  const long v = std::strtol(env, nullptr, 10);
  if (v < 1) return 1;
  return static_cast<unsigned>(v);
}

}  // namespace

unsigned thread_budget() {
  unsigned v = g_thread_budget.load(std::memory_order_relaxed);
  if (v == 0) {
    v = read_env_threads();
    g_thread_budget.store(v, std::memory_order_relaxed);
  }
  return v;
}

void set_thread_budget(unsigned n) {
  g_thread_budget.store(n == 0 ? 1 : n, std::memory_order_relaxed);
}

DenseMatrix binarize(const DenseMatrix& latent) {
  if (!latent.is_finite()) throw NonFiniteInput("binarize");
  DenseMatrix out = latent;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = out.data()[i] < 0.0 ? -1.0 : 1.0;
  }
  return out;
}

PackedBitMatrix pack_signs(const DenseMatrix& signs) {
  PackedBitMatrix packed;
  packed.rows = static_cast<std::uint32_t>(signs.rows());
  packed.cols = static_cast<std::uint32_t>(signs.cols());
  packed.words.assign(signs.rows() * packed.words_per_row(), 0u);
  const std::size_t wpr = packed.words_per_row();
  for (std::size_t i = 0; i < signs.rows(); ++i) {
    const double* row = signs.row(i);
    std::uint32_t* dst = packed.words.data() + i * wpr;
    for (std::size_t j = 0; j < signs.cols(); ++j) {
      if (row[j] == 1.0) {
        dst[j / 32] |= 1u << (j % 32);
      } else if (row[j] != -1.0) {
        throw NonBinaryEntry("pack_signs: entries must be exactly +-1");
      }
    }
  }
  return packed;
}

DenseMatrix unpack_signs(const PackedBitMatrix& packed) {
  const std::size_t wpr = packed.words_per_row();
  if (packed.words.size() != packed.rows * wpr) {
    throw DimensionMismatch("unpack_signs: word count mismatch");
  }
  const std::uint32_t tail_bits = packed.cols % 32;
  if (tail_bits != 0) {
    const std::uint32_t pad_mask = ~0u << tail_bits;
    for (std::size_t i = 0; i < packed.rows; ++i) {
      if (packed.row(i)[wpr - 1] & pad_mask) {
        throw CorruptPadding();
      }
    }
  }
  DenseMatrix out(packed.rows, packed.cols);
  for (std::size_t i = 0; i < packed.rows; ++i) {
    const std::uint32_t* src = packed.row(i);
    double* dst = out.row(i);
    for (std::size_t j = 0; j < packed.cols; ++j) {
      dst[j] = (src[j / 32] >> (j % 32)) & 1u ? 1.0 : -1.0;
    }
  }
  return out;
}

FactorizedLayer make_factorized_layer(const DenseMatrix& latent_u,
                                      const DenseMatrix& latent_v,
                                      std::vector<double> s1,
                                      std::vector<double> s2) {
  if (latent_u.cols() != latent_v.cols()) {
    throw DimensionMismatch("make_factorized_layer: ranks differ");
  }
  if (s1.size() != latent_u.rows() || s2.size() != latent_v.rows()) {
    throw DimensionMismatch("make_factorized_layer: scale lengths");
  }
  FactorizedLayer layer;
  layer.n = static_cast<std::uint32_t>(latent_u.rows());
  layer.m = static_cast<std::uint32_t>(latent_v.rows());
  layer.r = static_cast<std::uint32_t>(latent_u.cols());
  layer.u = pack_signs(binarize(latent_u));
  layer.v = pack_signs(binarize(latent_v));
  layer.s1 = std::move(s1);
  layer.s2 = std::move(s2);
  return layer;
}

DenseMatrix reconstruct_dense(const FactorizedLayer& layer) {
  DenseMatrix w(layer.n, layer.m);
  const std::size_t wpr = layer.u.words_per_row();
  for (std::size_t i = 0; i < layer.n; ++i) {
    const std::uint32_t* urow = layer.u.row(i);
    double* wrow = w.row(i);
    for (std::size_t j = 0; j < layer.m; ++j) {
      const std::uint32_t* vrow = layer.v.row(j);
      // popcount of agreeing bits: +1 per match, -1 per mismatch over r
      std::int64_t agree = 0;
      for (std::size_t wk = 0; wk < wpr; ++wk) {
        const std::uint32_t same = ~(urow[wk] ^ vrow[wk]);
        // mask out padding in the last word
        const std::uint32_t tail = layer.r % 32;
        const std::uint32_t mask =
            (wk + 1 == wpr && tail != 0) ? ((1u << tail) - 1u) : ~0u;
        agree += __builtin_popcount(same & mask);
      }
      const std::int64_t inner = 2 * agree - static_cast<std::int64_t>(layer.r);
      wrow[j] = layer.s1[i] * static_cast<double>(inner) * layer.s2[j];
    }
  }
  return w;
}

namespace {

template <typename Acc, typename Scalar>
std::vector<Acc> gemv_two_stage(const FactorizedLayer& layer,
                                const Scalar* x, std::size_t len) {
  if (len != layer.m) throw DimensionMismatch("gemv_packed: |x| != m");
  const std::size_t wpr = layer.v.words_per_row();
  std::vector<Acc> t(layer.r, Acc(0));
  // stage 1: t = V^T (s2 .* x), unpacking bits on the fly
  for (std::size_t j = 0; j < layer.m; ++j) {
    const Acc a = static_cast<Acc>(layer.s2[j]) * static_cast<Acc>(x[j]);
    if (a == Acc(0)) continue;
    const std::uint32_t* vrow = layer.v.row(j);
    for (std::size_t wk = 0; wk < wpr; ++wk) {
      std::uint32_t word = vrow[wk];
      const std::size_t base = wk * 32;
      const std::size_t limit = std::min<std::size_t>(32, layer.r - base);
      for (std::size_t b = 0; b < limit; ++b) {
        t[base + b] += (word & 1u) ? a : -a;
        word >>= 1;
      }
    }
  }
  // stage 2: y = s1 .* (U t)
  std::vector<Acc> y(layer.n, Acc(0));
  const std::size_t uwpr = layer.u.words_per_row();
  for (std::size_t i = 0; i < layer.n; ++i) {
    const std::uint32_t* urow = layer.u.row(i);
    Acc acc(0);
    for (std::size_t wk = 0; wk < uwpr; ++wk) {
      std::uint32_t word = urow[wk];
      const std::size_t base = wk * 32;
      const std::size_t limit = std::min<std::size_t>(32, layer.r - base);
      for (std::size_t b = 0; b < limit; ++b) {
        acc += (word & 1u) ? t[base + b] : -t[base + b];
        word >>= 1;
      }
    }
    y[i] = static_cast<Acc>(layer.s1[i]) * acc;
  }
  return y;
}

}  // namespace

std::vector<double> gemv_packed(const FactorizedLayer& layer,
                                const std::vector<double>& x) {
  return gemv_two_stage<double>(layer, x.data(), x.size());
}

std::vector<float> gemv_packed_f32(const FactorizedLayer& layer,
                                   const std::vector<float>& x) {
  return gemv_two_stage<float>(layer, x.data(), x.size());
}

namespace {

// Processes columns [c0, c1) of X into Y. Per column the j/k iteration order
// is identical to gemv_two_stage, so results match gemv exactly.
void gemm_tile(const FactorizedLayer& layer, const DenseMatrix& x,
               std::size_t c0, std::size_t c1, DenseMatrix& y) {
  const std::size_t b = c1 - c0;
  const std::size_t wpr = layer.v.words_per_row();
  std::vector<double> t(static_cast<std::size_t>(layer.r) * b, 0.0);
  for (std::size_t j = 0; j < layer.m; ++j) {
    const double s2j = layer.s2[j];
    const double* xrow = x.row(j) + c0;
    const std::uint32_t* vrow = layer.v.row(j);
    for (std::size_t wk = 0; wk < wpr; ++wk) {
      std::uint32_t word = vrow[wk];
      const std::size_t base = wk * 32;
      const std::size_t limit = std::min<std::size_t>(32, layer.r - base);
      for (std::size_t bit = 0; bit < limit; ++bit) {
        double* trow = t.data() + (base + bit) * b;
        if (word & 1u) {
          for (std::size_t c = 0; c < b; ++c) trow[c] += s2j * xrow[c];
        } else {
          for (std::size_t c = 0; c < b; ++c) trow[c] -= s2j * xrow[c];
        }
        word >>= 1;
      }
    }
  }
  const std::size_t uwpr = layer.u.words_per_row();
  std::vector<double> acc(b);
  for (std::size_t i = 0; i < layer.n; ++i) {
    const std::uint32_t* urow = layer.u.row(i);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t wk = 0; wk < uwpr; ++wk) {
      std::uint32_t word = urow[wk];
      const std::size_t base = wk * 32;
      const std::size_t limit = std::min<std::size_t>(32, layer.r - base);
      for (std::size_t bit = 0; bit < limit; ++bit) {
        const double* trow = t.data() + (base + bit) * b;
        if (word & 1u) {
          for (std::size_t c = 0; c < b; ++c) acc[c] += trow[c];
        } else {
          for (std::size_t c = 0; c < b; ++c) acc[c] -= trow[c];
        }
        word >>= 1;
      }
    }
    double* yrow = y.row(i) + c0;
    for (std::size_t c = 0; c < b; ++c) yrow[c] = layer.s1[i] * acc[c];
  }
}

}  // namespace

DenseMatrix gemm_packed(const FactorizedLayer& layer, const DenseMatrix& x) {
  if (x.rows() != layer.m) throw DimensionMismatch("gemm_packed: rows(X) != m");
  DenseMatrix y(layer.n, x.cols());
  constexpr std::size_t kTile = 16;
  const unsigned workers = thread_budget();
  if (workers <= 1 || x.cols() <= kTile) {
    for (std::size_t c0 = 0; c0 < x.cols(); c0 += kTile) {
      gemm_tile(layer, x, c0, std::min(c0 + kTile, x.cols()), y);
    }
    return y;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t tiles = (x.cols() + kTile - 1) / kTile;
  auto work = [&]() {
    for (;;) {
      const std::size_t tile = next.fetch_add(1);
      if (tile >= tiles) return;
      const std::size_t c0 = tile * kTile;
      gemm_tile(layer, x, c0, std::min(c0 + kTile, x.cols()), y);
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = std::min<unsigned>(workers, static_cast<unsigned>(tiles));
  pool.reserve(count);
  for (unsigned i = 0; i < count; ++i) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  return y;
}

}  // namespace nanoquant
