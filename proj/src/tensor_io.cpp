/*
 * Copyright 2026 The maskfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "maskfed/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "maskfed/errors.hpp"

namespace maskfed {
namespace wire {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void Reader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw FormatError("truncated payload");
}

std::uint8_t Reader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str(std::size_t n) {
  need(n);
  std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace wire

namespace {
constexpr char kMagic[] = "EFTV1";
constexpr std::size_t kMagicLen = 5;
}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
  for (const auto& [name, t] : tensors) {
    wire::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    wire::put_u8(out, static_cast<std::uint8_t>(t.dtype()));
    wire::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) wire::put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.data()) {
      if (t.dtype() == DType::kFloat32) {
        wire::put_f32(out, static_cast<float>(v));
      } else {
        wire::put_f64(out, v);
      }
    }
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("missing EFTV1 magic");
  }
  wire::Reader r(bytes);
  r.str(kMagicLen);
  std::vector<NamedTensor> out;
  while (!r.done()) {
    NamedTensor nt;
    nt.name = r.str(r.u32());
    const auto tag = r.u8();
    if (tag > 1) throw FormatError("unknown dtype tag in tensor " + nt.name);
    const auto dtype = static_cast<DType>(tag);
    Shape shape(r.u32());
    for (auto& d : shape) d = static_cast<std::int64_t>(r.u64());
    std::vector<double> values(static_cast<std::size_t>(numel(shape)));
    for (auto& v : values) v = dtype == DType::kFloat32 ? r.f32() : r.f64();
    nt.tensor = Tensor::from(std::move(shape), std::move(values), dtype);
    out.push_back(std::move(nt));
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  wire::write_file(path, encode_tensors(tensors));
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  return decode_tensors(wire::read_file(path));
}

}  // namespace maskfed
