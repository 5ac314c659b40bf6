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

#ifndef NANOQUANT_HALF_HPP
#define NANOQUANT_HALF_HPP

#include <cstdint>
#include <cstring>

namespace nanoquant {

// IEEE 754 binary16 conversion, round-to-nearest-even. Scales are stored at
// 16 bits so the on-disk accounting matches 16(n+m) exactly.

inline std::uint16_t float_to_half(float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  const std::uint32_t sign = (bits >> 16) & 0x8000u;
  const std::int32_t exponent = static_cast<std::int32_t>((bits >> 23) & 0xFFu) - 127;
  std::uint32_t mantissa = bits & 0x7FFFFFu;

  if (exponent == 128) {  // inf or nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (mantissa ? 0x200u : 0u));
  }
  if (exponent > 15) {  // overflow to inf
    return static_cast<std::uint16_t>(sign | 0x7C00u);
  }
  if (exponent >= -14) {  // normal range
    std::uint32_t half = (static_cast<std::uint32_t>(exponent + 15) << 10) |
                         (mantissa >> 13);
    const std::uint32_t rest = mantissa & 0x1FFFu;
    if (rest > 0x1000u || (rest == 0x1000u && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  if (exponent >= -25) {  // subnormal half
    const std::uint32_t sig = mantissa | 0x800000u;  // 24-bit significand
    const int shift = -exponent - 1;                 // 14..24
    std::uint32_t half = sig >> shift;
    const std::uint32_t rest = sig & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rest > halfway || (rest == halfway && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  return static_cast<std::uint16_t>(sign);  // underflow to zero
}

inline float half_to_float(std::uint16_t half) {
  const std::uint32_t sign = (static_cast<std::uint32_t>(half) & 0x8000u) << 16;
  const std::uint32_t exponent = (half >> 10) & 0x1Fu;
  const std::uint32_t mantissa = half & 0x3FFu;
  std::uint32_t bits;
  if (exponent == 0x1Fu) {
    bits = sign | 0x7F800000u | (mantissa << 13);
  } else if (exponent != 0) {
    bits = sign | ((exponent + 112u) << 23) | (mantissa << 13);
  } else if (mantissa != 0) {  // subnormal: renormalize
    std::uint32_t e = 113;
    std::uint32_t m = mantissa << 13;
    while ((m & 0x800000u) == 0) {
      m <<= 1;
      --e;
    }
    bits = sign | (e << 23) | (m & 0x7FFFFFu);
  } else {
    bits = sign;
  }
  float out;
  std::memcpy(&out, &bits, sizeof(out));
  return out;
}

inline std::uint16_t double_to_half(double value) {
  return float_to_half(static_cast<float>(value));
}

inline double half_to_double(std::uint16_t half) {
  return static_cast<double>(half_to_float(half));
}

}  // namespace nanoquant

#endif  // NANOQUANT_HALF_HPP
