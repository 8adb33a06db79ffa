// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_FEATPIPE_FEATURES_HPP_
#define REFEREE_FEATPIPE_FEATURES_HPP_

#include <cstddef>
#include <string>
#include <string_view>

#include "referee/numcore/nn.hpp"
#include "referee/numcore/tensor.hpp"

namespace referee::featpipe {

using numcore::Tensor;

/// Segment geometry of one model window.
struct SegmentConfig {
  int n_seg = 8;
  double seg_duration_s = 0.64;
  double window_s = 2.88;
  int t_v = 4;  // visual tokens per segment
  int t_a = 6;  // audio tokens per segment
  int d_raw = 32;
  int d = 64;

  /// Throws std::invalid_argument on degenerate geometry.
  void validate() const;
  double seg_stride_s() const;
  std::size_t n_visual() const { return static_cast<std::size_t>(n_seg * t_v); }
  std::size_t n_audio() const { return static_cast<std::size_t>(n_seg * t_a); }
  std::size_t sequence_length() const { return n_visual() + 1 + n_audio(); }
};

/// (window - seg_duration) / (n_seg - 1). Rejects n_seg < 2 and zero or
/// negative strides.
double segment_stride(const SegmentConfig& cfg);

enum class Role { kTgt, kRef };

/// Token index ranges of [visual; F_mod; audio].
struct Layout {
  std::size_t visual_begin = 0;
  std::size_t visual_len = 0;
  std::size_t mod_index = 0;
  std::size_t audio_begin = 0;
  std::size_t audio_len = 0;

  std::size_t length() const { return audio_begin + audio_len; }
};

Layout make_layout(const SegmentConfig& cfg);

template <typename T>
struct FeatureSequence {
  Tensor<T> tokens;  // [B, length, D]
  Layout layout;
  Role role = Role::kTgt;
};

/// Learnable input stage: per-modality projection D_raw -> D, per-modality
/// positional tables over token index, and the F_mod separator.
template <typename T>
class FeatureAssembler {
  SegmentConfig cfg_;
  Layout layout_;
  bool positional_ = true;

 public:
  FeatureAssembler() = default;
  FeatureAssembler(const SegmentConfig& cfg, numcore::Rng& rng, bool positional = true)
      : cfg_(cfg),
        layout_(make_layout(cfg)),
        positional_(positional),
        proj_v(static_cast<std::size_t>(cfg.d_raw), static_cast<std::size_t>(cfg.d), rng),
        proj_a(static_cast<std::size_t>(cfg.d_raw), static_cast<std::size_t>(cfg.d), rng),
        f_mod(numcore::init_normal<T>({static_cast<std::size_t>(cfg.d)}, rng)) {
    cfg.validate();
    if (positional_) {
      pos_v = numcore::init_normal<T>({cfg.n_visual(), static_cast<std::size_t>(cfg.d)}, rng);
      pos_a = numcore::init_normal<T>({cfg.n_audio(), static_cast<std::size_t>(cfg.d)}, rng);
    }
  }

  /// visual_raw: [B, N_seg*T_v, D_raw] or unbatched [N_seg*T_v, D_raw];
  /// audio_raw likewise with T_a. Output is always batched.
  FeatureSequence<T> assemble(const Tensor<T>& visual_raw, const Tensor<T>& audio_raw,
                              Role role) const {
    const Tensor<T> v = batched(visual_raw, cfg_.n_visual(), "visual");
    const Tensor<T> a = batched(audio_raw, cfg_.n_audio(), "audio");
    if (v.dim(0) != a.dim(0)) {
      throw numcore::ShapeError("assemble: visual batch " + std::to_string(v.dim(0)) +
                                " vs audio batch " + std::to_string(a.dim(0)));
    }
    const std::size_t batch = v.dim(0);
    Tensor<T> fv = proj_v(v);
    Tensor<T> fa = proj_a(a);
    if (positional_) {
      fv = numcore::add(fv, pos_v);
      fa = numcore::add(fa, pos_a);
    }
    const auto d = static_cast<std::size_t>(cfg_.d);
    const Tensor<T> sep = numcore::expand_leading(numcore::reshape(f_mod, {1, d}), batch);
    return {numcore::concat<T>({fv, sep, fa}, 1), layout_, role};
  }

  void collect(numcore::ParamList<T>& out, std::string_view prefix) const {
    proj_v.collect(out, numcore::join_name(prefix, "proj_v"));
    proj_a.collect(out, numcore::join_name(prefix, "proj_a"));
    if (positional_) {
      out.push_back({numcore::join_name(prefix, "pos_v"), pos_v});
      out.push_back({numcore::join_name(prefix, "pos_a"), pos_a});
    }
    out.push_back({numcore::join_name(prefix, "f_mod"), f_mod});
  }

  const SegmentConfig& config() const { return cfg_; }
  const Layout& layout() const { return layout_; }
  bool positional() const { return positional_; }

  numcore::Linear<T> proj_v, proj_a;
  Tensor<T> pos_v, pos_a;  // [N_seg*T, D], undefined when positional is off
  Tensor<T> f_mod;         // [D]

 private:
  Tensor<T> batched(const Tensor<T>& x, std::size_t rows, const char* what) const {
    const auto d_raw = static_cast<std::size_t>(cfg_.d_raw);
    const bool ok2 = x.rank() == 2 && x.dim(0) == rows && x.dim(1) == d_raw;
    const bool ok3 = x.rank() == 3 && x.dim(1) == rows && x.dim(2) == d_raw;
    if (!ok2 && !ok3) {
      throw numcore::ShapeError(std::string("assemble: ") + what + " tokens " +
                                numcore::shape_to_string(x.shape()) + " do not match [" +
                                std::to_string(rows) + ", " + std::to_string(d_raw) + "]");
    }
    return ok2 ? numcore::reshape(x, {1, rows, d_raw}) : x;
  }
};

}  // namespace referee::featpipe

#endif  // REFEREE_FEATPIPE_FEATURES_HPP_
