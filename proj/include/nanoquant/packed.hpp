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

#ifndef NANOQUANT_PACKED_HPP
#define NANOQUANT_PACKED_HPP

#include <cstdint>
#include <vector>

#include "nanoquant/dense.hpp"

namespace nanoquant {

// One bit per sign, row-major, ceil(cols/32) words per row. Bit b of word w
// in a row encodes column 32*w + b (LSB first); 1 means +1, 0 means -1.
// Padding bits beyond cols are zero. This layout is part of the file format.
struct PackedBitMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint32_t> words;

  static constexpr std::uint32_t kWordBits = 32;

  std::size_t words_per_row() const {
    return (static_cast<std::size_t>(cols) + kWordBits - 1) / kWordBits;
  }
  const std::uint32_t* row(std::size_t i) const {
    return words.data() + i * words_per_row();
  }
  // +1.0 or -1.0
  double sign_at(std::size_t i, std::size_t j) const {
    const std::uint32_t word = row(i)[j / kWordBits];
    return (word >> (j % kWordBits)) & 1u ? 1.0 : -1.0;
  }
};

// Entrywise sign with sign(0) = +1.
DenseMatrix binarize(const DenseMatrix& latent);

// Every entry must be exactly +1 or -1.
PackedBitMatrix pack_signs(const DenseMatrix& signs);

// Inverse of pack_signs. Throws CorruptPadding when pad bits are set.
DenseMatrix unpack_signs(const PackedBitMatrix& packed);

// The compressed layer: W^ = s1 .* (U V^T) .* s2^T with packed sign factors.
struct FactorizedLayer {
  std::uint32_t n = 0;  // output rows
  std::uint32_t m = 0;  // input cols
  std::uint32_t r = 0;  // rank
  PackedBitMatrix u;    // n x r
  PackedBitMatrix v;    // m x r
  std::vector<double> s1;  // length n
  std::vector<double> s2;  // length m

  // Logical payload: r(n+m) sign bits plus 16(n+m) scale bits.
  std::uint64_t payload_bits() const {
    return static_cast<std::uint64_t>(r) * (n + m) +
           16ull * (static_cast<std::uint64_t>(n) + m);
  }
};

FactorizedLayer make_factorized_layer(const DenseMatrix& latent_u,
                                      const DenseMatrix& latent_v,
                                      std::vector<double> s1,
                                      std::vector<double> s2);

// W^_ij = s1_i (sum_k U_ik V_jk) s2_j with the factors unpacked to +-1.
DenseMatrix reconstruct_dense(const FactorizedLayer& layer);

// Two-stage product without materializing W^:
//   t = V^T (s2 .* x) in R^r, then y = s1 .* (U t).
// Bits are unpacked on the fly; accumulation is 64-bit.
std::vector<double> gemv_packed(const FactorizedLayer& layer,
                                const std::vector<double>& x);

// Same arithmetic with float accumulators, for callers that trade accuracy
// for bandwidth. Tolerance degrades to ~1e-5 relative.
std::vector<float> gemv_packed_f32(const FactorizedLayer& layer,
                                   const std::vector<float>& x);

// Batched path over X (m x b), blocked over column tiles of the packed
// words. Per column the accumulation order matches gemv_packed exactly, so
// columns agree bit for bit. Tiles may run on worker threads (see
// thread_budget), which does not change results.
DenseMatrix gemm_packed(const FactorizedLayer& layer, const DenseMatrix& x);

// Worker cap from NQ_THREADS (defaults to 1). Value 1 is the deterministic
// test mode; results are identical for any setting.
unsigned thread_budget();
void set_thread_budget(unsigned n);

}  // namespace nanoquant

#endif  // NANOQUANT_PACKED_HPP
