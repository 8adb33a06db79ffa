// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/numcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace referee::numcore {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw CheckpointError("container truncated at byte " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(const std::vector<NamedArray>& arrays) {
  Writer w;
  w.raw(kContainerMagic, 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.name.size() > 0xFFFF) {
      throw CheckpointError("array name too long: " + a.name.substr(0, 64));
    }
    if (a.shape.size() > 0xFF) throw CheckpointError("rank too large for " + a.name);
    if (shape_numel(a.shape) != a.values.size()) {
      throw CheckpointError("array " + a.name + " has " +
                            std::to_string(a.values.size()) +
                            " values for shape " + shape_to_string(a.shape));
    }
    w.u16(static_cast<std::uint16_t>(a.name.size()));
    w.raw(a.name.data(), a.name.size());
    w.u8(static_cast<std::uint8_t>(a.shape.size()));
    for (std::size_t d : a.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : a.values) w.f32(v);
  }
  return w.take();
}

std::vector<NamedArray> decode_container(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kContainerMagic, 4)) {
    throw CheckpointError("bad container magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw CheckpointError("unsupported container version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    for (std::uint8_t d = 0; d < rank; ++d) a.shape.push_back(r.u32());
    const std::size_t n = shape_numel(a.shape);
    a.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) a.values[j] = r.f32();
    arrays.push_back(std::move(a));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last record");
  return arrays;
}

void write_container(const std::filesystem::path& path,
                     const std::vector<NamedArray>& arrays) {
  const auto bytes = encode_container(arrays);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::vector<NamedArray> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

template <typename T>
std::vector<NamedArray> to_arrays(const ParamList<T>& params) {
  std::vector<NamedArray> arrays;
  arrays.reserve(params.size());
  for (const auto& p : params) {
    NamedArray a{p.name, p.tensor.shape(), {}};
    a.values.reserve(p.tensor.numel());
    for (T v : p.tensor.data()) a.values.push_back(static_cast<float>(v));
    arrays.push_back(std::move(a));
  }
  return arrays;
}

template <typename T>
void load_arrays(ParamList<T>& params, const std::vector<NamedArray>& arrays) {
  std::unordered_map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  if (by_name.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(by_name.size()) +
                          " arrays, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks " + p.name);
    if (it->second->shape != p.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + p.name + ": checkpoint " +
                            shape_to_string(it->second->shape) + ", model " +
                            shape_to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<T>(it->second->values[i]);
    }
  }
}

template std::vector<NamedArray> to_arrays(const ParamList<float>&);
template std::vector<NamedArray> to_arrays(const ParamList<double>&);
template void load_arrays(ParamList<float>&, const std::vector<NamedArray>&);
template void load_arrays(ParamList<double>&, const std::vector<NamedArray>&);

}  // namespace referee::numcore
