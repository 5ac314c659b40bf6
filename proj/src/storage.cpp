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

#include "nanoquant/storage.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "nanoquant/errors.hpp"

namespace nanoquant {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void check_layer_dims(std::uint64_t n, std::uint64_t m) {
  if (n == 0 || m == 0) {
    throw Error(ErrorKind::kValidation, "layer dims must be positive");
  }
}

std::uint64_t binomial(std::uint64_t m, std::uint64_t n) {
  if (n > m) throw Error(ErrorKind::kValidation, "N:M sparsity needs N <= M");
  n = std::min(n, m - n);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= n; ++i) {
    result = result * (m - n + i) / i;
  }
  return result;
}

}  // namespace

std::uint64_t sparsity_index_bits(std::uint64_t pattern_n, std::uint64_t pattern_m) {
  const std::uint64_t comb = binomial(pattern_m, pattern_n);
  std::uint64_t bits = 0;
  while ((1ull << bits) < comb) ++bits;
  return bits;  // ceil(log2 comb), 0 when comb == 1
}

double layer_bits_nanoquant(std::uint64_t n, std::uint64_t m, std::uint64_t r) {
  check_layer_dims(n, m);
  if (r == 0) throw InvalidRank("layer_bits_nanoquant: r >= 1");
  return static_cast<double>(r * (n + m) + 16 * (n + m));
}

double bpw_nanoquant(std::uint64_t n, std::uint64_t m, std::uint64_t r) {
  return layer_bits_nanoquant(n, m, r) / static_cast<double>(n * m);
}

double bpw_dbf(std::uint64_t n, std::uint64_t m, std::uint64_t r) {
  check_layer_dims(n, m);
  if (r == 0) throw InvalidRank("bpw_dbf: r >= 1");
  return static_cast<double>(r * (n + m) + 16 * (n + m + r)) /
         static_cast<double>(n * m);
}

double layer_bits_baseline(const BaselineParams& p, std::uint64_t n, std::uint64_t m) {
  check_layer_dims(n, m);
  if (p.c > 50) {
    throw InvalidSalientCount("salient columns capped at 50");
  }
  if (p.c > m) {
    throw InvalidSalientCount("salient columns exceed layer width");
  }
  if (p.k == 0) throw Error(ErrorKind::kValidation, "block size k >= 1");

  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double cd = static_cast<double>(p.c);
  const double blocks = static_cast<double>(ceil_div(m, p.k));

  switch (p.method) {
    case BaselineMethod::kBiLlm:
      // n(2m+c) + m + 112 n ceil(m/k), plus 2 bits per row
      return nd * (2.0 * md + cd) + md + 112.0 * nd * blocks + 2.0 * nd;
    case BaselineMethod::kStbLlm: {
      const double N = static_cast<double>(p.sparsity_n);
      const double M = static_cast<double>(p.sparsity_m);
      if (p.sparsity_n > p.sparsity_m || p.sparsity_m == 0) {
        throw Error(ErrorKind::kValidation, "invalid N:M pattern");
      }
      const double idx = static_cast<double>(
          sparsity_index_bits(p.sparsity_n, p.sparsity_m));
      double bits = 2.0 * nd * cd;                    // salient second-order signs
      bits += blocks * 3.0 * nd * 16.0;               // salient scales + mean
      bits += (N / M) * (nd * (md - cd) + 2.0 * nd * md);  // kept signs + group tags
      bits += (nd * (md - cd) / M) * idx;             // sparsity indices
      bits += blocks * 2.0 * nd * 16.0 * 3.0;         // per-group scales/means
      bits += md;                                     // salient column bitmap
      bits += 2.0 * nd;                               // per-row allowance
      return bits;
    }
    case BaselineMethod::kArbLlmRC:
      // n(2m+c) + 33m + 64 n ceil(m/k), plus 2 bits per row and two 16-bit
      // column refinement scales per block
      return nd * (2.0 * md + cd) + 33.0 * md + 64.0 * nd * blocks + 2.0 * nd +
             32.0 * blocks;
    case BaselineMethod::kHbllmRow:
      return 2.0 * nd * (md + cd) + md + 160.0 * nd * blocks;
    case BaselineMethod::kHbllmCol:
      return 2.0 * nd * md + md + 112.0 * nd * blocks;
  }
  throw UnsupportedMethod();
}

double bpw_baseline(const BaselineParams& p, std::uint64_t n, std::uint64_t m) {
  return layer_bits_baseline(p, n, m) / static_cast<double>(n * m);
}

std::uint32_t rank_for_target_bpw(std::uint64_t n, std::uint64_t m, double target_bpw) {
  check_layer_dims(n, m);
  if (!(target_bpw > 0.0)) {
    throw TargetTooSmall("target BPW must be positive");
  }
  const double nm = static_cast<double>(n) * static_cast<double>(m);
  const double ideal = target_bpw * nm / static_cast<double>(n + m) - 16.0;
  const long long rounded = std::llround(ideal);
  const std::uint64_t max_rank = std::min(n, m);
  if (rounded < 1) {
    if (bpw_nanoquant(n, m, 1) > 2.0 * target_bpw) {
      throw TargetTooSmall("even rank 1 overshoots the target by more than 2x");
    }
    return 1;
  }
  return static_cast<std::uint32_t>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(rounded), max_rank));
}

namespace {

BpwReport build_report(const ModelShape& shape,
                       const std::function<double(const LayerShape&)>& layer_bits) {
  if (shape.layers.empty()) {
    throw Error(ErrorKind::kValidation, "model shape has no layers");
  }
  BpwReport report;
  double params = 0.0;
  for (const LayerShape& layer : shape.layers) {
    const double bits = layer_bits(layer);
    report.per_layer_bits.push_back(bits);
    report.total_bits += bits * static_cast<double>(layer.count);
    params += static_cast<double>(layer.n) * static_cast<double>(layer.m) *
              static_cast<double>(layer.count);
  }
  report.bpw = report.total_bits / params;
  report.size_ratio = report.total_bits / (16.0 * params);
  report.total_bytes =
      (report.total_bits + 16.0 * static_cast<double>(shape.residual_fp16_params)) / 8.0;
  report.gigabytes_decimal = report.total_bytes / 1e9;
  report.gibibytes_binary = report.total_bytes / 1073741824.0;
  return report;
}

std::uint32_t policy_rank(const RankPolicy& policy, std::uint64_t n, std::uint64_t m) {
  if (policy.fixed_rank.has_value() == policy.target_bpw.has_value()) {
    throw Error(ErrorKind::kValidation,
                "rank policy needs exactly one of fixed_rank / target_bpw");
  }
  if (policy.fixed_rank) return *policy.fixed_rank;
  return rank_for_target_bpw(n, m, *policy.target_bpw);
}

}  // namespace

BpwReport model_report_baseline(const ModelShape& shape, const BaselineParams& params) {
  return build_report(shape, [&](const LayerShape& l) {
    BaselineParams p = params;
    p.c = std::min<std::uint64_t>(p.c, l.m);  // cap per layer width
    return layer_bits_baseline(p, l.n, l.m);
  });
}

BpwReport model_report_nanoquant(const ModelShape& shape, const RankPolicy& policy) {
  return build_report(shape, [&](const LayerShape& l) {
    return layer_bits_nanoquant(l.n, l.m, policy_rank(policy, l.n, l.m));
  });
}

BpwReport model_report_dbf(const ModelShape& shape, const RankPolicy& policy) {
  return build_report(shape, [&](const LayerShape& l) {
    const std::uint64_t r = policy_rank(policy, l.n, l.m);
    return static_cast<double>(r * (l.n + l.m) + 16 * (l.n + l.m + r));
  });
}

}  // namespace nanoquant
