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

#ifndef NANOQUANT_PRECONDITION_HPP
#define NANOQUANT_PRECONDITION_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "nanoquant/dense.hpp"

namespace nanoquant {

// Per-channel second-moment accumulator with a cumulative percentile
// threshold tau. tau never decreases across accumulate calls, which is what
// bounds the clipped diagonals later.
struct ChannelStats {
  explicit ChannelStats(std::size_t channel_count)
      : sum_squares(channel_count, 0.0) {}

  std::size_t channel_count() const { return sum_squares.size(); }

  std::vector<double> sum_squares;
  std::uint64_t sample_count = 0;
  double tau = 0.0;
};

// batch is samples x channels. The percentile is taken over this batch's
// per-channel RMS values (linear interpolation on the sorted sequence) and
// folded into tau via a running max.
void accumulate_stats(ChannelStats& stats, const DenseMatrix& batch, double percentile);

// Associative combine: sums add, counts add, tau takes the max.
ChannelStats merge_stats(const ChannelStats& a, const ChannelStats& b);

// Clipped, shrunk diagonal preconditioner pair. diag_out defaults to identity
// when no output-side statistics exist.
struct Preconditioner {
  std::vector<double> diag_in;
  std::vector<double> diag_out;
  double gamma = 0.0;
  double tau_max = 1.0;
};

// Raw diagonal entries are min(RMS_j, tau), then shrunk toward their mean by
// gamma and floored at eps_floor. Gradient-side stats are optional because a
// calibration pass may have no loss attached.
Preconditioner build_preconditioner(const ChannelStats& in_stats,
                                    const std::optional<ChannelStats>& out_stats,
                                    double gamma, double eps_floor);

// W~ = D_out W D_in, entrywise w_ij * diag_out[i] * diag_in[j].
DenseMatrix precondition_weight(const DenseMatrix& w, const Preconditioner& p);

// Inverse map: divides rows of an n x r factor by diag entries. Used when
// recovering unscaled proxies after the solver.
void unprecondition_rows(DenseMatrix& factor, const std::vector<double>& diag);

}  // namespace nanoquant

#endif  // NANOQUANT_PRECONDITION_HPP
