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

#include "nanoquant/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "nanoquant/half.hpp"

namespace nanoquant {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(data_[pos_]) |
                      static_cast<std::uint32_t>(data_[pos_ + 1]) << 8 |
                      static_cast<std::uint32_t>(data_[pos_ + 2]) << 16 |
                      static_cast<std::uint32_t>(data_[pos_ + 3]) << 24;
    pos_ += 4;
    return v;
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(
        data_[pos_] | static_cast<std::uint16_t>(data_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }

  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t bytes) {
    if (pos_ + bytes > size_) throw ParseError("file truncated");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace

void write_matrix_nqmx(const std::string& path, const DenseMatrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + m.size() * 4);
  out.insert(out.end(), {'N', 'Q', 'M', 'X'});
  put_u32(out, kNqmxVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    put_f32(out, static_cast<float>(m.data()[i]));
  }
  write_file(path, out);
}

DenseMatrix read_matrix_nqmx(const std::string& path) {
  const auto bytes = read_file(path);
  Reader r(bytes.data(), bytes.size());
  if (r.str(4) != "NQMX") throw ParseError(path + ": bad NQMX magic");
  const std::uint32_t version = r.u32();
  if (version != kNqmxVersion) throw ParseError(path + ": unsupported NQMX version");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(r.f32());
  }
  if (!r.done()) throw ParseError(path + ": trailing bytes");
  return m;
}

std::vector<std::uint8_t> serialize_packed_model(const PackedModelFile& model) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'N', 'Q', 'P', 'K'});
  put_u32(out, model.version);
  put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& named : model.layers) {
    const FactorizedLayer& l = named.layer;
    put_u32(out, static_cast<std::uint32_t>(named.name.size()));
    out.insert(out.end(), named.name.begin(), named.name.end());
    put_u32(out, l.n);
    put_u32(out, l.m);
    put_u32(out, l.r);
    for (std::uint32_t w : l.u.words) put_u32(out, w);
    for (std::uint32_t w : l.v.words) put_u32(out, w);
    for (double s : l.s1) put_u16(out, double_to_half(s));
    for (double s : l.s2) put_u16(out, double_to_half(s));
  }
  return out;
}

PackedModelFile deserialize_packed_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  if (r.str(4) != "NQPK") throw ParseError("bad NQPK magic");
  PackedModelFile model;
  model.version = r.u32();
  if (model.version != kNqpkVersion) throw ParseError("unsupported NQPK version");
  const std::uint32_t count = r.u32();
  model.layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedFactorizedLayer named;
    const std::uint32_t name_len = r.u32();
    named.name = r.str(name_len);
    FactorizedLayer& l = named.layer;
    l.n = r.u32();
    l.m = r.u32();
    l.r = r.u32();
    if (l.n == 0 || l.m == 0 || l.r == 0) throw ParseError("zero layer dimension");
    const std::size_t wpr = (static_cast<std::size_t>(l.r) + 31) / 32;
    l.u.rows = l.n;
    l.u.cols = l.r;
    l.u.words.resize(static_cast<std::size_t>(l.n) * wpr);
    for (auto& w : l.u.words) w = r.u32();
    l.v.rows = l.m;
    l.v.cols = l.r;
    l.v.words.resize(static_cast<std::size_t>(l.m) * wpr);
    for (auto& w : l.v.words) w = r.u32();
    l.s1.resize(l.n);
    for (auto& s : l.s1) s = half_to_double(r.u16());
    l.s2.resize(l.m);
    for (auto& s : l.s2) s = half_to_double(r.u16());
    model.layers.push_back(std::move(named));
  }
  if (!r.done()) throw ParseError("trailing bytes in NQPK stream");
  return model;
}

void write_packed_model(const std::string& path, const PackedModelFile& model) {
  write_file(path, serialize_packed_model(model));
}

PackedModelFile read_packed_model(const std::string& path) {
  return deserialize_packed_model(read_file(path));
}

ModelShape parse_shape_config(const std::string& text) {
  ModelShape shape;
  bool saw_residual = false;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "residual") {
      std::uint64_t count = 0;
      if (!(ls >> count)) {
        throw ParseError("shape config line " + std::to_string(line_no) +
                         ": residual needs a count");
      }
      shape.residual_fp16_params = count;
      saw_residual = true;
      continue;
    }
    LayerShape layer;
    layer.name = first;
    if (!(ls >> layer.n >> layer.m >> layer.count) || layer.n == 0 ||
        layer.m == 0 || layer.count == 0) {
      throw ParseError("shape config line " + std::to_string(line_no) +
                       ": expected `name n m count`");
    }
    shape.layers.push_back(std::move(layer));
  }
  if (shape.layers.empty()) throw ParseError("shape config has no layers");
  (void)saw_residual;  // residual defaults to 0 when absent
  return shape;
}

ModelShape read_shape_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_shape_config(buffer.str());
}

}  // namespace nanoquant
