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

#include "nanoquant/precondition.hpp"

#include <algorithm>
#include <cmath>

namespace nanoquant {

namespace {

// linear-interpolation quantile of a sorted sequence, p in (0,1)
double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void accumulate_stats(ChannelStats& stats, const DenseMatrix& batch, double percentile) {
  if (batch.cols() != stats.channel_count()) {
    throw DimensionMismatch("accumulate_stats: cols(batch) != channel_count");
  }
  if (!(percentile > 0.0 && percentile < 1.0)) {
    throw Error(ErrorKind::kValidation, "percentile must be in (0,1)");
  }
  if (!batch.is_finite()) throw NonFiniteInput("accumulate_stats");
  if (batch.rows() == 0) return;

  std::vector<double> batch_sq(stats.channel_count(), 0.0);
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const double* row = batch.row(i);
    for (std::size_t j = 0; j < batch.cols(); ++j) {
      batch_sq[j] += row[j] * row[j];
    }
  }
  std::vector<double> rms(stats.channel_count());
  for (std::size_t j = 0; j < rms.size(); ++j) {
    rms[j] = std::sqrt(batch_sq[j] / static_cast<double>(batch.rows()));
    stats.sum_squares[j] += batch_sq[j];
  }
  stats.sample_count += batch.rows();

  std::sort(rms.begin(), rms.end());
  stats.tau = std::max(stats.tau, quantile_sorted(rms, percentile));
}

ChannelStats merge_stats(const ChannelStats& a, const ChannelStats& b) {
  if (a.channel_count() != b.channel_count()) {
    throw DimensionMismatch("merge_stats: channel counts differ");
  }
  ChannelStats out = a;
  for (std::size_t j = 0; j < out.sum_squares.size(); ++j) {
    out.sum_squares[j] += b.sum_squares[j];
  }
  out.sample_count += b.sample_count;
  out.tau = std::max(a.tau, b.tau);
  return out;
}

namespace {

std::vector<double> clipped_shrunk_diag(const ChannelStats& stats, double gamma,
                                        double eps_floor) {
  std::vector<double> d(stats.channel_count());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double rms = std::sqrt(stats.sum_squares[j] / static_cast<double>(stats.sample_count));
    d[j] = std::min(rms, stats.tau);  // clip first, then shrink
  }
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  for (double& x : d) {
    x = (1.0 - gamma) * x + gamma * mean;
    x = std::max(x, eps_floor);
  }
  return d;
}

}  // namespace

Preconditioner build_preconditioner(const ChannelStats& in_stats,
                                    const std::optional<ChannelStats>& out_stats,
                                    double gamma, double eps_floor) {
  if (in_stats.sample_count == 0) throw EmptyStats("build_preconditioner: input stats");
  if (out_stats && out_stats->sample_count == 0) {
    throw EmptyStats("build_preconditioner: output stats");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorKind::kValidation, "gamma must lie in [0,1]");
  }
  if (!(eps_floor > 0.0)) {
    throw Error(ErrorKind::kValidation, "eps_floor must be positive");
  }
  Preconditioner p;
  p.gamma = gamma;
  p.diag_in = clipped_shrunk_diag(in_stats, gamma, eps_floor);
  if (out_stats) {
    p.diag_out = clipped_shrunk_diag(*out_stats, gamma, eps_floor);
    p.tau_max = std::max(in_stats.tau, out_stats->tau);
  } else {
    p.diag_out.clear();  // empty means identity; length checked at use sites
    p.tau_max = std::max(in_stats.tau, 1.0);
  }
  return p;
}

DenseMatrix precondition_weight(const DenseMatrix& w, const Preconditioner& p) {
  if (!p.diag_in.empty() && w.cols() != p.diag_in.size()) {
    throw DimensionMismatch("precondition_weight: cols(W) != |diag_in|");
  }
  if (!p.diag_out.empty() && w.rows() != p.diag_out.size()) {
    throw DimensionMismatch("precondition_weight: rows(W) != |diag_out|");
  }
  DenseMatrix out = w;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double di = p.diag_out.empty() ? 1.0 : p.diag_out[i];
    double* row = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) {
      row[j] *= di * (p.diag_in.empty() ? 1.0 : p.diag_in[j]);
    }
  }
  return out;
}

void unprecondition_rows(DenseMatrix& factor, const std::vector<double>& diag) {
  if (diag.empty()) return;  // identity
  if (factor.rows() != diag.size()) {
    throw DimensionMismatch("unprecondition_rows: rows(factor) != |diag|");
  }
  for (std::size_t i = 0; i < factor.rows(); ++i) {
    double* row = factor.row(i);
    const double inv = 1.0 / diag[i];
    for (std::size_t j = 0; j < factor.cols(); ++j) row[j] *= inv;
  }
}

}  // namespace nanoquant
