// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/synthworld/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "referee/numcore/checkpoint.hpp"
#include "referee/numcore/random.hpp"

namespace referee::synthworld {

namespace {

using numcore::derive_seed;
using numcore::Rng;

// Stream tags for derive_seed.
enum : std::uint64_t {
  kStreamProjV = 1,
  kStreamProjA,
  kStreamArtifact,
  kStreamSpeakers,
  kStreamContent,
  kStreamNoiseV,
  kStreamNoiseA,
};

std::vector<float> project(const std::vector<float>& proj, const std::vector<float>& z,
                           int d_raw, int d_id) {
  std::vector<float> out(static_cast<std::size_t>(d_raw), 0.0f);
  for (int r = 0; r < d_raw; ++r) {
    double acc = 0;
    for (int c = 0; c < d_id; ++c) {
      acc += static_cast<double>(proj[static_cast<std::size_t>(r * d_id + c)]) *
             z[static_cast<std::size_t>(c)];
    }
    out[static_cast<std::size_t>(r)] = static_cast<float>(acc);
  }
  return out;
}

// Content process of one clip: c_d(t) = w * sum_k sin(2 pi f_k t + phi_dk).
class ContentProcess {
 public:
  ContentProcess(const WorldConfig& cfg, std::uint64_t content_seed)
      : d_(cfg.d_id), k_(cfg.content_sinusoids) {
    Rng rng(derive_seed(content_seed, kStreamContent));
    for (int k = 0; k < k_; ++k) {
      freqs_.push_back(cfg.freq_min + (cfg.freq_max - cfg.freq_min) * numcore::uniform01(rng));
    }
    for (int i = 0; i < d_ * k_; ++i) {
      phases_.push_back(2.0 * std::numbers::pi * numcore::uniform01(rng));
    }
    weight_ = k_ > 0 ? cfg.content_ratio / std::sqrt(0.5 * d_ * k_) : 0.0;
  }

  void eval(double t, std::vector<double>& out) const {
    out.assign(static_cast<std::size_t>(d_), 0.0);
    if (weight_ == 0.0) return;
    for (int d = 0; d < d_; ++d) {
      double acc = 0;
      for (int k = 0; k < k_; ++k) {
        acc += std::sin(2.0 * std::numbers::pi * freqs_[static_cast<std::size_t>(k)] * t +
                        phases_[static_cast<std::size_t>(d * k_ + k)]);
      }
      out[static_cast<std::size_t>(d)] = weight_ * acc;
    }
  }

 private:
  int d_;
  int k_;
  double weight_ = 0.0;
  std::vector<double> freqs_;
  std::vector<double> phases_;
};

// Renders one modality stream.
numcore::Tensor<float> render_stream(const WorldConfig& cfg, const std::vector<float>& proj,
                                     const std::vector<double>& z, const ContentProcess& content,
                                     int segments, int tokens_per_segment, double time_shift,
                                     std::uint64_t noise_seed, const std::vector<float>* artifact) {
  const int d_raw = cfg.d_raw, d_id = cfg.d_id;
  const int rows = segments * tokens_per_segment;
  std::vector<float> values(static_cast<std::size_t>(rows * d_raw));
  Rng noise(noise_seed);
  std::vector<double> c;
  std::vector<double> latent(static_cast<std::size_t>(d_id));
  for (int seg = 0; seg < segments; ++seg) {
    for (int i = 0; i < tokens_per_segment; ++i) {
      const int row = seg * tokens_per_segment + i;
      const double t = seg + cfg.segment_span * (i + 0.5) / tokens_per_segment;
      content.eval(t + time_shift, c);
      for (int d = 0; d < d_id; ++d) {
        latent[static_cast<std::size_t>(d)] = z[static_cast<std::size_t>(d)] + c[static_cast<std::size_t>(d)];
      }
      for (int r = 0; r < d_raw; ++r) {
        double acc = 0;
        for (int d = 0; d < d_id; ++d) {
          acc += static_cast<double>(proj[static_cast<std::size_t>(r * d_id + d)]) *
                 latent[static_cast<std::size_t>(d)];
        }
        if (cfg.noise_sigma > 0) acc += cfg.noise_sigma * numcore::standard_normal(noise);
        if (artifact != nullptr && row % cfg.artifact_period == 0) {
          acc += cfg.artifact_amplitude * (*artifact)[static_cast<std::size_t>(r)];
        }
        values[static_cast<std::size_t>(row * d_raw + r)] = static_cast<float>(acc);
      }
    }
  }
  return numcore::Tensor<float>::from(
      {static_cast<std::size_t>(rows), static_cast<std::size_t>(d_raw)}, std::move(values));
}

}  // namespace

std::string_view to_string(Manipulation m) {
  switch (m) {
    case Manipulation::kReal: return "REAL";
    case Manipulation::kVisualSwap: return "VISUAL_SWAP";
    case Manipulation::kAudioSwap: return "AUDIO_SWAP";
    case Manipulation::kBothSwap: return "BOTH_SWAP";
    case Manipulation::kDesync: return "DESYNC";
    case Manipulation::kArtifact: return "ARTIFACT";
  }
  return "UNKNOWN";
}

Manipulation parse_manipulation(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  for (Manipulation m : kAllManipulations) {
    if (to_string(m) == upper) return m;
  }
  throw std::invalid_argument("unknown manipulation '" + std::string(name) + "'");
}

void WorldConfig::validate() const {
  if (d_id <= 0 || d_raw <= 0 || t_v <= 0 || t_a <= 0 || content_sinusoids < 0 ||
      artifact_period <= 0 || segment_span <= 0) {
    throw std::invalid_argument("world config: dimensions must be positive");
  }
  if (noise_sigma < 0 || content_ratio < 0 || identity_scale <= 0 || freq_min < 0 ||
      freq_max < freq_min) {
    throw std::invalid_argument("world config: invalid amplitude or frequency range");
  }
}

void ClipSpec::validate() const {
  const bool v_ok = speaker_v == target_speaker;
  const bool a_ok = speaker_a == target_speaker;
  const bool synced = desync_shift == 0;
  bool ok = false;
  switch (manipulation) {
    case Manipulation::kReal:
    case Manipulation::kArtifact: ok = v_ok && a_ok && synced; break;
    case Manipulation::kVisualSwap: ok = !v_ok && a_ok && synced; break;
    case Manipulation::kAudioSwap: ok = v_ok && !a_ok && synced; break;
    case Manipulation::kBothSwap: ok = !v_ok && !a_ok && synced; break;
    case Manipulation::kDesync: ok = v_ok && a_ok && !synced; break;
  }
  if (!ok) {
    throw std::invalid_argument("clip spec inconsistent with manipulation " +
                                std::string(to_string(manipulation)));
  }
  if (duration_segments <= 0) {
    throw std::invalid_argument("clip spec: duration_segments must be positive");
  }
}

World World::create(const WorldConfig& config, int n_speakers) {
  config.validate();
  if (n_speakers <= 0) throw std::invalid_argument("world needs at least one speaker");
  World w;
  w.config_ = config;
  const std::size_t proj_size = static_cast<std::size_t>(config.d_raw * config.d_id);
  Rng rv(derive_seed(config.seed, kStreamProjV));
  Rng ra(derive_seed(config.seed, kStreamProjA));
  for (std::size_t i = 0; i < proj_size; ++i) {
    w.proj_v_.push_back(static_cast<float>(config.identity_scale * numcore::standard_normal(rv)));
    w.proj_a_.push_back(static_cast<float>(config.identity_scale * numcore::standard_normal(ra)));
  }
  Rng rart(derive_seed(config.seed, kStreamArtifact));
  for (int i = 0; i < config.d_raw; ++i) {
    w.artifact_.push_back((rart() & 1) ? 1.0f : -1.0f);
  }
  Rng rs(derive_seed(config.seed, kStreamSpeakers));
  for (int s = 0; s < n_speakers; ++s) {
    Speaker sp{s, std::vector<float>(static_cast<std::size_t>(config.d_id))};
    std::vector<double> raw(static_cast<std::size_t>(config.d_id));
    double norm = 0;
    for (double& v : raw) {
      v = numcore::standard_normal(rs);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < raw.size(); ++i) sp.z[i] = static_cast<float>(raw[i] / norm);
    w.speakers_.push_back(std::move(sp));
  }
  return w;
}

const Speaker& World::speaker(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= speakers_.size()) {
    throw std::out_of_range("unknown speaker id " + std::to_string(id));
  }
  return speakers_[static_cast<std::size_t>(id)];
}

std::vector<float> World::visual_identity(int speaker_id) const {
  return project(proj_v_, speaker(speaker_id).z, config_.d_raw, config_.d_id);
}

std::vector<float> World::audio_identity(int speaker_id) const {
  return project(proj_a_, speaker(speaker_id).z, config_.d_raw, config_.d_id);
}

ClipTokens World::render_clip(const ClipSpec& spec, std::uint64_t rng_seed) const {
  spec.validate();
  const ContentProcess content(config_, spec.content_seed);
  const bool artifact = spec.manipulation == Manipulation::kArtifact;
  ClipTokens out;
  const auto& zv = speaker(spec.speaker_v).z;
  const auto& za = speaker(spec.speaker_a).z;
  const std::vector<double> z_v(zv.begin(), zv.end()), z_a(za.begin(), za.end());
  out.visual = render_stream(config_, proj_v_, z_v, content,
                             spec.duration_segments, config_.t_v, 0.0,
                             derive_seed(rng_seed, kStreamNoiseV), artifact ? &artifact_ : nullptr);
  out.audio = render_stream(config_, proj_a_, z_a, content,
                            spec.duration_segments, config_.t_a,
                            static_cast<double>(spec.desync_shift),
                            derive_seed(rng_seed, kStreamNoiseA), nullptr);
  return out;
}

void World::save(const std::filesystem::path& path) const {
  const auto d_raw = static_cast<std::size_t>(config_.d_raw);
  const auto d_id = static_cast<std::size_t>(config_.d_id);
  std::vector<float> latents;
  for (const auto& s : speakers_) latents.insert(latents.end(), s.z.begin(), s.z.end());
  numcore::write_container(path, {
                                     {"world.proj_v", {d_raw, d_id}, proj_v_},
                                     {"world.proj_a", {d_raw, d_id}, proj_a_},
                                     {"world.artifact", {d_raw}, artifact_},
                                     {"world.speakers", {speakers_.size(), d_id}, latents},
                                 });
}

World World::load(const std::filesystem::path& path, const WorldConfig& config) {
  config.validate();
  World w;
  w.config_ = config;
  const auto d_raw = static_cast<std::size_t>(config.d_raw);
  const auto d_id = static_cast<std::size_t>(config.d_id);
  bool have_v = false, have_a = false, have_art = false, have_spk = false;
  for (auto& a : numcore::read_container(path)) {
    if (a.name == "world.proj_v" && a.shape == numcore::Shape{d_raw, d_id}) {
      w.proj_v_ = std::move(a.values);
      have_v = true;
    } else if (a.name == "world.proj_a" && a.shape == numcore::Shape{d_raw, d_id}) {
      w.proj_a_ = std::move(a.values);
      have_a = true;
    } else if (a.name == "world.artifact" && a.shape == numcore::Shape{d_raw}) {
      w.artifact_ = std::move(a.values);
      have_art = true;
    } else if (a.name == "world.speakers" && a.shape.size() == 2 && a.shape[1] == d_id) {
      for (std::size_t s = 0; s < a.shape[0]; ++s) {
        Speaker sp{static_cast<int>(s),
                   std::vector<float>(a.values.begin() + static_cast<std::ptrdiff_t>(s * d_id),
                                      a.values.begin() + static_cast<std::ptrdiff_t>((s + 1) * d_id))};
        w.speakers_.push_back(std::move(sp));
      }
      have_spk = true;
    }
  }
  if (!(have_v && have_a && have_art && have_spk)) {
    throw numcore::CheckpointError("world file " + path.string() +
                                   " is missing arrays or has mismatched dimensions");
  }
  return w;
}

}  // namespace referee::synthworld
