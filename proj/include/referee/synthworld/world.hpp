// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_SYNTHWORLD_WORLD_HPP_
#define REFEREE_SYNTHWORLD_WORLD_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "referee/numcore/tensor.hpp"

namespace referee::synthworld {

enum class Manipulation { kReal, kVisualSwap, kAudioSwap, kBothSwap, kDesync, kArtifact };

inline constexpr Manipulation kAllManipulations[] = {
    Manipulation::kReal,     Manipulation::kVisualSwap, Manipulation::kAudioSwap,
    Manipulation::kBothSwap, Manipulation::kDesync,     Manipulation::kArtifact};

std::string_view to_string(Manipulation m);
/// Accepts the canonical upper-case names ("VISUAL_SWAP") case-insensitively.
Manipulation parse_manipulation(std::string_view name);

/// Generative constants of the identity world.
///
/// Rendering, for a clip claiming speaker s with face identity z_v and voice
/// identity z_a (both unit vectors in R^d_id):
///   visual(t) = P_v (z_v + c(t))               + noise [+ artifact]
///   audio(t)  = P_a (z_a + c(t + desync_shift)) + noise
/// c(t) is the clip's content process: every latent dimension is a sum of
/// `content_sinusoids` random-phase sinusoids over segment index, scaled so
/// that E|c(t)|^2 = content_ratio^2 (identity and content share the latent
/// space, so a single modality can only separate them by temporal
/// structure). P_v, P_a have N(0, identity_scale^2) entries, so per-dimension
/// identity RMS is identity_scale.
struct WorldConfig {
  int d_id = 16;
  int d_raw = 32;
  int t_v = 4;  // visual tokens per segment
  int t_a = 6;  // audio tokens per segment
  double segment_span = 2.0;  // segment duration in units of segment stride
  int content_sinusoids = 4;
  double content_ratio = 1.0;   // content RMS relative to identity
  double identity_scale = 1.0;  // raw-space RMS of the identity term
  double noise_sigma = 0.1;
  double freq_min = 0.1;  // cycles per segment index
  double freq_max = 0.35;
  double artifact_amplitude = 0.3;
  int artifact_period = 4;  // every k-th visual token
  std::uint64_t seed = 7;

  void validate() const;
};

struct Speaker {
  int id = 0;
  std::vector<float> z;  // unit norm, d_id entries
};

/// One clip's generative description.
///
/// `target_speaker` is the identity the clip purports to show and the one
/// whose reference recordings it is compared with.
struct ClipSpec {
  int target_speaker = 0;
  int speaker_v = 0;
  int speaker_a = 0;
  std::uint64_t content_seed = 0;
  int desync_shift = 0;  // in segments
  Manipulation manipulation = Manipulation::kReal;
  int duration_segments = 8;

  /// Enforces that each manipulation carries its defining inconsistency and
  /// no other.
  void validate() const;
};

/// Rendered per-segment token streams.
/// Segment k starts k segment-strides into the clip; its tokens occupy rows
/// [k * t, (k + 1) * t) of the matching tensor.
struct ClipTokens {
  numcore::Tensor<float> visual;  // [duration_segments * t_v, d_raw]
  numcore::Tensor<float> audio;   // [duration_segments * t_a, d_raw]
};

class World {
 public:
  World() = default;

  /// Draws world constants and `n_speakers` identities from config.seed.
  static World create(const WorldConfig& config, int n_speakers);

  const WorldConfig& config() const { return config_; }
  const std::vector<Speaker>& speakers() const { return speakers_; }
  const Speaker& speaker(int id) const;

  /// Row-major [d_raw x d_id].
  const std::vector<float>& visual_projection() const { return proj_v_; }
  const std::vector<float>& audio_projection() const { return proj_a_; }
  /// Rademacher pattern, d_raw entries.
  const std::vector<float>& artifact_pattern() const { return artifact_; }

  /// P * z for the given speaker, d_raw entries.
  std::vector<float> visual_identity(int speaker_id) const;
  std::vector<float> audio_identity(int speaker_id) const;

  /// Pure function of (world, spec, rng_seed).
  ClipTokens render_clip(const ClipSpec& spec, std::uint64_t rng_seed) const;

  /// Writes constants and speaker latents as a tensor container.
  void save(const std::filesystem::path& path) const;
  static World load(const std::filesystem::path& path, const WorldConfig& config);

 private:
  WorldConfig config_;
  std::vector<float> proj_v_;
  std::vector<float> proj_a_;
  std::vector<float> artifact_;
  std::vector<Speaker> speakers_;
};

}  // namespace referee::synthworld

#endif  // REFEREE_SYNTHWORLD_WORLD_HPP_
