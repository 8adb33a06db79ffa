// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_NUMCORE_CHECKPOINT_HPP_
#define REFEREE_NUMCORE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "referee/numcore/nn.hpp"

namespace referee::numcore {

// Little-endian tensor container:
//   "RFRE" | version u32 | count u32
//   per record: name_len u16 | name bytes | rank u8 | dims u32 x rank | f32 x numel
inline constexpr char kContainerMagic[4] = {'R', 'F', 'R', 'E'};
inline constexpr std::uint32_t kContainerVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

std::vector<std::uint8_t> encode_container(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path,
                     const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_container(const std::filesystem::path& path);

template <typename T>
std::vector<NamedArray> to_arrays(const ParamList<T>& params);

/// Copies values into existing parameters; names and shapes must match
/// exactly, in any order.
template <typename T>
void load_arrays(ParamList<T>& params, const std::vector<NamedArray>& arrays);

template <typename T>
void save_parameters(const std::filesystem::path& path,
                     const ParamList<T>& params) {
  write_container(path, to_arrays(params));
}

template <typename T>
void load_parameters(const std::filesystem::path& path, ParamList<T>& params) {
  load_arrays(params, read_container(path));
}

}  // namespace referee::numcore

#endif  // REFEREE_NUMCORE_CHECKPOINT_HPP_
