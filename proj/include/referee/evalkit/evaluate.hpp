// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_EVALKIT_EVALUATE_HPP_
#define REFEREE_EVALKIT_EVALUATE_HPP_

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "referee/avformer/model.hpp"
#include "referee/evalkit/metrics.hpp"
#include "referee/synthworld/dataset.hpp"
#include "referee/synthworld/sampler.hpp"

namespace referee::evalkit {

/// Produces {real, fake} probabilities for windows described as pairs with
/// their target_offset set.
class WindowScorer {
 public:
  virtual ~WindowScorer() = default;
  virtual void score(const synthworld::Dataset& dataset,
                     std::span<const synthworld::PairRecord> windows,
                     std::span<Probs> out) const = 0;
};

/// Softmax of the detector's rf logits, evaluated in inference mode.
class ModelScorer : public WindowScorer {
 public:
  explicit ModelScorer(const avformer::RefereeModel<float>& model, std::size_t batch = 32)
      : model_(&model), batch_(batch) {}
  void score(const synthworld::Dataset& dataset, std::span<const synthworld::PairRecord> windows,
             std::span<Probs> out) const override;

 private:
  const avformer::RefereeModel<float>* model_;
  std::size_t batch_;
};

/// Emits the true label as probability.
class OracleScorer : public WindowScorer {
 public:
  void score(const synthworld::Dataset&, std::span<const synthworld::PairRecord> windows,
             std::span<Probs> out) const override;
};

class ConstantScorer : public WindowScorer {
 public:
  explicit ConstantScorer(double p_fake = 0.5) : p_fake_(p_fake) {}
  void score(const synthworld::Dataset&, std::span<const synthworld::PairRecord> windows,
             std::span<Probs> out) const override;

 private:
  double p_fake_;
};

/// Label-independent uniform scores, a function of (seed, clip, offset).
class RandomScorer : public WindowScorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  void score(const synthworld::Dataset&, std::span<const synthworld::PairRecord> windows,
             std::span<Probs> out) const override;

 private:
  std::uint64_t seed_;
};

struct EvalOptions {
  double window_s = 2.88;
  double overlap_frac = 0.05;
};

struct ClipScore {
  int clip_id = 0;
  synthworld::Manipulation manipulation = synthworld::Manipulation::kReal;
  int y_fake = 0;
  double score = 0.0;  // aggregated fake probability
  int prediction = 0;
  std::size_t n_windows = 0;
};

struct EvalResult {
  MetricsReport report;
  std::vector<ClipScore> clips;
};

/// Segment offsets of the windows for a clip: plan_windows over the clip's
/// duration, each start snapped to the segment grid.
std::vector<int> window_offsets(const synthworld::Dataset& dataset, int clip_id,
                                const avformer::ModelConfig& model_config,
                                const EvalOptions& options = {});

/// Windowed inference over every predefined pair of `split`.
EvalResult evaluate(const WindowScorer& scorer, const synthworld::Dataset& dataset,
                    synthworld::Split split, const avformer::ModelConfig& model_config,
                    const EvalOptions& options = {});

/// Metrics from final clip scores.
MetricsReport compute_report(std::span<const ClipScore> clips, synthworld::Split split);

void write_scores_csv(std::ostream& out, std::span<const ClipScore> clips);

}  // namespace referee::evalkit

#endif  // REFEREE_EVALKIT_EVALUATE_HPP_
