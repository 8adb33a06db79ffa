// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_SYNTHWORLD_DATASET_HPP_
#define REFEREE_SYNTHWORLD_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "referee/numcore/tensor.hpp"
#include "referee/synthworld/world.hpp"

namespace referee::synthworld {

enum class Split { kTrain, kVal, kTestIn, kTestUnseen };

std::string_view to_string(Split s);
/// Accepts "TRAIN", "test_unseen", ... case-insensitively.
Split parse_split(std::string_view name);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  WorldConfig world;
  int n_speakers = 20;
  int clips_per_speaker = 40;
  /// Fraction of each speaker's clips per manipulation; must sum to 1.
  std::map<Manipulation, double> mix = {
      {Manipulation::kReal, 0.30},     {Manipulation::kVisualSwap, 0.14},
      {Manipulation::kAudioSwap, 0.14}, {Manipulation::kBothSwap, 0.14},
      {Manipulation::kDesync, 0.14},    {Manipulation::kArtifact, 0.14}};
  std::vector<Manipulation> held_out_manipulations = {Manipulation::kDesync,
                                                      Manipulation::kArtifact};
  /// Speaker ids reserved for TEST_UNSEEN.
  std::vector<int> held_out_speakers = {16, 17, 18, 19};
  int min_segments = 8;
  int max_segments = 18;
  /// Segments per model window; clips shorter than this are rejected.
  int window_segments = 8;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  /// Probability that a training draw is a REAL target.
  double real_sampling_weight = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);
void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

struct ClipRecord {
  int id = 0;
  ClipSpec spec;
  Split split = Split::kTrain;
  std::uint64_t render_seed = 0;
  /// Predefined evaluation reference (a REAL clip of the target speaker
  /// outside TRAIN); -1 for TRAIN clips, whose references are sampled.
  int reference_id = -1;

  int y_fake() const { return spec.manipulation == Manipulation::kReal ? 0 : 1; }
  /// Pairs are always same-speaker and distinct, so identity holds iff the
  /// target is genuine.
  int y_id_match() const { return 1 - y_fake(); }
};

class Dataset {
 public:
  Dataset() = default;

  /// Deterministic under config.seed and config.world.seed.
  static Dataset generate(const DatasetConfig& config);

  /// Writes dataset.jsonl, dataset.bin and world.bin into `dir`.
  void save(const std::filesystem::path& dir) const;
  static Dataset load(const std::filesystem::path& dir);

  const DatasetConfig& config() const { return config_; }
  const World& world() const { return world_; }
  const std::vector<ClipRecord>& clips() const { return clips_; }
  const ClipRecord& clip(int id) const;
  const ClipTokens& tokens(int id) const;

  /// Clip ids in `split`, ascending.
  std::vector<int> split_ids(Split split) const;
  /// REAL TRAIN clips of `speaker`, ascending.
  const std::vector<int>& train_reals(int speaker) const;

  /// Rows [offset, offset + n_seg) segments of a clip's token streams.
  ClipTokens window(int id, int segment_offset, int n_seg) const;

 private:
  void index();

  DatasetConfig config_;
  World world_;
  std::vector<ClipRecord> clips_;
  std::vector<ClipTokens> tokens_;
  std::map<int, std::vector<int>> train_reals_;
};

/// Manifest line for one clip (also the format of dataset.jsonl body lines).
nlohmann::json clip_to_json(const ClipRecord& r);
ClipRecord clip_from_json(const nlohmann::json& j);

}  // namespace referee::synthworld

#endif  // REFEREE_SYNTHWORLD_DATASET_HPP_
