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

#ifndef NANOQUANT_IO_HPP
#define NANOQUANT_IO_HPP

#include <string>
#include <vector>

#include "nanoquant/dense.hpp"
#include "nanoquant/packed.hpp"
#include "nanoquant/storage.hpp"

namespace nanoquant {

// All integers little-endian.
//
// NQMX matrix file: magic "NQMX", version u32, rows u32, cols u32, then
// rows*cols float32 row-major.
//
// NQPK packed model file: magic "NQPK", version u32, layer count u32; per
// layer: name length u32 + UTF-8 bytes, n u32, m u32, r u32, U words
// (n * ceil(r/32) u32), V words (m * ceil(r/32) u32), s1 as n binary16,
// s2 as m binary16.

inline constexpr std::uint32_t kNqmxVersion = 1;
inline constexpr std::uint32_t kNqpkVersion = 1;

struct NamedFactorizedLayer {
  std::string name;
  FactorizedLayer layer;
};

struct PackedModelFile {
  std::uint32_t version = kNqpkVersion;
  std::vector<NamedFactorizedLayer> layers;

  std::uint64_t payload_bits() const {
    std::uint64_t bits = 0;
    for (const auto& l : layers) bits += l.layer.payload_bits();
    return bits;
  }
};

void write_matrix_nqmx(const std::string& path, const DenseMatrix& m);
DenseMatrix read_matrix_nqmx(const std::string& path);

// Serialization snaps scales to binary16; the returned layer scales of a
// read-back therefore differ from pre-write values by at most half rounding.
std::vector<std::uint8_t> serialize_packed_model(const PackedModelFile& model);
PackedModelFile deserialize_packed_model(const std::vector<std::uint8_t>& bytes);
void write_packed_model(const std::string& path, const PackedModelFile& model);
PackedModelFile read_packed_model(const std::string& path);

// Shape-config text format: one `name n m count` record per line, `#`
// comments, plus one `residual <count>` line for the fp16 leftovers.
ModelShape read_shape_config(const std::string& path);
ModelShape parse_shape_config(const std::string& text);

}  // namespace nanoquant

#endif  // NANOQUANT_IO_HPP
