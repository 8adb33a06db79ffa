// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/synthworld/sampler.hpp"

#include <string>

namespace referee::synthworld {

TrainPairSampler::TrainPairSampler(const Dataset& dataset, SamplingPolicy policy)
    : dataset_(&dataset), policy_(policy) {
  if (!(policy.real_weight > 0 && policy.real_weight <= 1)) {
    throw std::invalid_argument("sampling policy: real_weight must lie in (0, 1]");
  }
  for (int id : dataset.split_ids(Split::kTrain)) {
    const ClipRecord& r = dataset.clip(id);
    if (r.spec.duration_segments < policy.window_segments) {
      throw DatasetError("clip " + std::to_string(id) + " is shorter than one window");
    }
    if (dataset.train_reals(r.spec.target_speaker).size() < 2) {
      throw DatasetError("speaker " + std::to_string(r.spec.target_speaker) +
                         " has fewer than 2 TRAIN real clips");
    }
    (r.y_fake() == 0 ? reals_ : fakes_).push_back(id);
  }
  if (reals_.empty()) throw DatasetError("TRAIN split has no real clips");
}

PairRecord TrainPairSampler::next(numcore::Rng& rng) const {
  const bool real = fakes_.empty() || numcore::uniform01(rng) < policy_.real_weight;
  const std::vector<int>& pool = real ? reals_ : fakes_;
  const int target = pool[numcore::uniform_index(rng, pool.size())];
  const ClipRecord& t = dataset_->clip(target);
  const std::vector<int>& refs = dataset_->train_reals(t.spec.target_speaker);
  // Uniform over the speaker's other real recordings.
  int reference = target;
  while (reference == target) reference = refs[numcore::uniform_index(rng, refs.size())];
  const ClipRecord& r = dataset_->clip(reference);

  PairRecord p;
  p.target_id = target;
  p.reference_id = reference;
  const int w = policy_.window_segments;
  p.target_offset = static_cast<int>(
      numcore::uniform_index(rng, static_cast<std::uint64_t>(t.spec.duration_segments - w + 1)));
  p.reference_offset = static_cast<int>(
      numcore::uniform_index(rng, static_cast<std::uint64_t>(r.spec.duration_segments - w + 1)));
  p.y_fake = t.y_fake();
  p.y_id_match = t.y_id_match();
  p.manipulation = t.spec.manipulation;
  p.split = Split::kTrain;
  return p;
}

std::vector<PairRecord> eval_pairs(const Dataset& dataset, Split split) {
  std::vector<PairRecord> out;
  for (int id : dataset.split_ids(split)) {
    const ClipRecord& r = dataset.clip(id);
    if (r.reference_id < 0) {
      throw DatasetError("clip " + std::to_string(id) + " in " + std::string(to_string(split)) +
                         " has no predefined reference");
    }
    PairRecord p;
    p.target_id = id;
    p.reference_id = r.reference_id;
    p.y_fake = r.y_fake();
    p.y_id_match = r.y_id_match();
    p.manipulation = r.spec.manipulation;
    p.split = split;
    out.push_back(p);
  }
  return out;
}

}  // namespace referee::synthworld
