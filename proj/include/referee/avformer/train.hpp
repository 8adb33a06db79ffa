// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_AVFORMER_TRAIN_HPP_
#define REFEREE_AVFORMER_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>

#include <json.hpp>

#include "referee/avformer/model.hpp"
#include "referee/synthworld/dataset.hpp"
#include "referee/synthworld/sampler.hpp"

namespace referee::avformer {

struct TrainConfig {
  ModelConfig model;
  int steps = 10000;
  int batch_size = 32;
  int warmup_steps = 500;
  double base_lr = 1e-3;
  double min_lr = 1e-4;
  std::uint64_t seed = 1;
  int log_every = 50;
  /// VAL evaluation cadence; 0 disables.
  int eval_every = 1000;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Gathers the windows named by `pairs` (at their segment offsets) into
/// batched model inputs.
ModelInputs<float> make_batch(const synthworld::Dataset& dataset,
                              std::span<const synthworld::PairRecord> pairs,
                              bool with_reference);

struct TrainSummary {
  std::size_t steps = 0;
  std::size_t n_params = 0;
  /// Parameters of the same model without any ablation flags.
  std::size_t n_params_full = 0;
  /// Mean total loss over the last log window.
  double final_loss = 0.0;
};

/// Returns JSON metrics for the log; called every eval_every steps.
using Validator = std::function<nlohmann::json(const RefereeModel<float>&)>;

/// Full training loop. Writes one JSON object per line to `log` (may be
/// null). Throws numcore::NumericError naming the step on a non-finite loss.
TrainSummary train(RefereeModel<float>& model, const synthworld::Dataset& dataset,
                   const TrainConfig& config, std::ostream* log,
                   const Validator& validator = {});

/// The ablation-free counterpart of `config` (same dims and depths).
ModelConfig full_config(const ModelConfig& config);

}  // namespace referee::avformer

#endif  // REFEREE_AVFORMER_TRAIN_HPP_
