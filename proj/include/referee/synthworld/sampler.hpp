// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_SYNTHWORLD_SAMPLER_HPP_
#define REFEREE_SYNTHWORLD_SAMPLER_HPP_

#include <vector>

#include "referee/numcore/random.hpp"
#include "referee/synthworld/dataset.hpp"

namespace referee::synthworld {

/// One (target, reference) example. Window offsets are in segments; eval
/// pairs leave target_offset at 0 and let the caller plan windows.
struct PairRecord {
  int target_id = 0;
  int reference_id = 0;
  int target_offset = 0;
  int reference_offset = 0;
  int y_fake = 0;
  int y_id_match = 1;
  Manipulation manipulation = Manipulation::kReal;
  Split split = Split::kTrain;
};

struct SamplingPolicy {
  /// Probability of drawing a REAL target; the rest are fakes.
  double real_weight = 0.5;
  /// Segments per model window.
  int window_segments = 8;
};

/// Class-balanced training stream over TRAIN clips.
class TrainPairSampler {
 public:
  TrainPairSampler(const Dataset& dataset, SamplingPolicy policy);

  PairRecord next(numcore::Rng& rng) const;

  std::size_t n_real() const { return reals_.size(); }
  std::size_t n_fake() const { return fakes_.size(); }

 private:
  const Dataset* dataset_;
  SamplingPolicy policy_;
  std::vector<int> reals_;
  std::vector<int> fakes_;
};

/// The manifest's predefined pairs for `split`, in clip-id order.
std::vector<PairRecord> eval_pairs(const Dataset& dataset, Split split);

}  // namespace referee::synthworld

#endif  // REFEREE_SYNTHWORLD_SAMPLER_HPP_
