// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/featpipe/features.hpp"

#include <cmath>
#include <stdexcept>

namespace referee::featpipe {

double segment_stride(const SegmentConfig& cfg) {
  if (cfg.n_seg < 2) {
    throw std::invalid_argument("segment_stride: n_seg must be at least 2, got " +
                                std::to_string(cfg.n_seg));
  }
  const double stride = (cfg.window_s - cfg.seg_duration_s) / (cfg.n_seg - 1);
  if (!(stride > 0)) {
    throw std::invalid_argument("segment_stride: window " + std::to_string(cfg.window_s) +
                                " s and segment " + std::to_string(cfg.seg_duration_s) +
                                " s give a degenerate stride");
  }
  return stride;
}

void SegmentConfig::validate() const {
  if (seg_duration_s <= 0 || t_v <= 0 || t_a <= 0 || d_raw <= 0 || d <= 0) {
    throw std::invalid_argument("segment config: sizes must be positive");
  }
  segment_stride(*this);
}

double SegmentConfig::seg_stride_s() const { return segment_stride(*this); }

Layout make_layout(const SegmentConfig& cfg) {
  Layout l;
  l.visual_begin = 0;
  l.visual_len = cfg.n_visual();
  l.mod_index = l.visual_len;
  l.audio_begin = l.mod_index + 1;
  l.audio_len = cfg.n_audio();
  return l;
}

}  // namespace referee::featpipe
