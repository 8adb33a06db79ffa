// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/avformer/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "referee/numcore/adam.hpp"
#include "referee/numcore/random.hpp"

namespace referee::avformer {

using nlohmann::json;

namespace {

constexpr std::uint64_t kStreamTrain = 301;

numcore::Tensor<float> stack_rows(const std::vector<const numcore::Tensor<float>*>& parts) {
  const std::size_t rows = parts.front()->dim(0);
  const std::size_t cols = parts.front()->dim(1);
  std::vector<float> values;
  values.reserve(parts.size() * rows * cols);
  for (const auto* t : parts) {
    auto d = t->data();
    values.insert(values.end(), d.begin(), d.end());
  }
  return numcore::Tensor<float>::from({parts.size(), rows, cols}, std::move(values));
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (steps <= 0 || batch_size <= 0) {
    throw std::invalid_argument("train config: steps and batch_size must be positive");
  }
  if (warmup_steps < 0 || warmup_steps >= steps) {
    throw std::invalid_argument("train config: warmup_steps must lie in [0, steps)");
  }
  if (!(min_lr > 0 && min_lr <= base_lr)) {
    throw std::invalid_argument("train config: need 0 < min_lr <= base_lr");
  }
  if (log_every <= 0 || eval_every < 0) {
    throw std::invalid_argument("train config: log_every must be positive");
  }
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"seg", {{"n_seg", c.seg.n_seg},
                    {"seg_duration_s", c.seg.seg_duration_s},
                    {"window_s", c.seg.window_s},
                    {"t_v", c.seg.t_v},
                    {"t_a", c.seg.t_a},
                    {"d_raw", c.seg.d_raw},
                    {"d", c.seg.d}}},
           {"idb", {{"n_q", c.idb.n_q},
                    {"depth", c.idb.depth},
                    {"heads", c.idb.heads},
                    {"ffn_mult", c.idb.ffn_mult},
                    {"query_pos", c.idb.query_pos}}},
           {"match", {{"depth", c.match.depth},
                      {"heads", c.match.heads},
                      {"ffn_mult", c.match.ffn_mult},
                      {"ffn", c.match.ffn}}},
           {"av_depth", c.av_depth},
           {"heads", c.heads},
           {"ffn_mult", c.ffn_mult},
           {"dropout", c.dropout},
           {"use_reference", c.use_reference},
           {"type_embeddings", c.type_embeddings},
           {"share_idb", c.share_idb},
           {"aux_head", c.aux_head},
           {"loss", {{"w_rf", c.loss.w_rf}, {"w_id", c.loss.w_id}}}};
}

void from_json(const json& j, ModelConfig& c) {
  const ModelConfig d;
  const json empty = json::object();
  const json& seg = j.contains("seg") ? j.at("seg") : empty;
  c.seg.n_seg = seg.value("n_seg", d.seg.n_seg);
  c.seg.seg_duration_s = seg.value("seg_duration_s", d.seg.seg_duration_s);
  c.seg.window_s = seg.value("window_s", d.seg.window_s);
  c.seg.t_v = seg.value("t_v", d.seg.t_v);
  c.seg.t_a = seg.value("t_a", d.seg.t_a);
  c.seg.d_raw = seg.value("d_raw", d.seg.d_raw);
  c.seg.d = seg.value("d", d.seg.d);
  const json& ib = j.contains("idb") ? j.at("idb") : empty;
  c.idb.n_q = ib.value("n_q", d.idb.n_q);
  c.idb.depth = ib.value("depth", d.idb.depth);
  c.idb.heads = ib.value("heads", d.idb.heads);
  c.idb.ffn_mult = ib.value("ffn_mult", d.idb.ffn_mult);
  c.idb.query_pos = ib.value("query_pos", d.idb.query_pos);
  const json& mb = j.contains("match") ? j.at("match") : empty;
  c.match.depth = mb.value("depth", d.match.depth);
  c.match.heads = mb.value("heads", d.match.heads);
  c.match.ffn_mult = mb.value("ffn_mult", d.match.ffn_mult);
  c.match.ffn = mb.value("ffn", d.match.ffn);
  c.av_depth = j.value("av_depth", d.av_depth);
  c.heads = j.value("heads", d.heads);
  c.ffn_mult = j.value("ffn_mult", d.ffn_mult);
  c.dropout = j.value("dropout", d.dropout);
  c.use_reference = j.value("use_reference", d.use_reference);
  c.type_embeddings = j.value("type_embeddings", d.type_embeddings);
  c.share_idb = j.value("share_idb", d.share_idb);
  const json& lw = j.contains("loss") ? j.at("loss") : empty;
  c.loss.w_rf = lw.value("w_rf", d.loss.w_rf);
  c.loss.w_id = lw.value("w_id", d.loss.w_id);
  // The identity head exists exactly when its loss is active unless stated.
  c.aux_head = j.value("aux_head", c.loss.w_id > 0);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"model", c.model},
           {"steps", c.steps},
           {"batch_size", c.batch_size},
           {"warmup_steps", c.warmup_steps},
           {"base_lr", c.base_lr},
           {"min_lr", c.min_lr},
           {"seed", c.seed},
           {"log_every", c.log_every},
           {"eval_every", c.eval_every}};
}

void from_json(const json& j, TrainConfig& c) {
  const TrainConfig d;
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.base_lr = j.value("base_lr", d.base_lr);
  c.min_lr = j.value("min_lr", d.min_lr);
  c.seed = j.value("seed", d.seed);
  c.log_every = j.value("log_every", d.log_every);
  c.eval_every = j.value("eval_every", d.eval_every);
}

ModelConfig full_config(const ModelConfig& config) {
  ModelConfig full = config;
  full.use_reference = true;
  full.type_embeddings = true;
  full.share_idb = true;
  full.aux_head = true;
  full.match.ffn = true;
  full.idb.query_pos = true;
  if (full.loss.w_id == 0) full.loss.w_id = 1.0;
  return full;
}

ModelInputs<float> make_batch(const synthworld::Dataset& dataset,
                              std::span<const synthworld::PairRecord> pairs,
                              bool with_reference) {
  if (pairs.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int n_seg = dataset.config().window_segments;
  std::vector<synthworld::ClipTokens> tgt, ref;
  tgt.reserve(pairs.size());
  for (const auto& p : pairs) {
    tgt.push_back(dataset.window(p.target_id, p.target_offset, n_seg));
    if (with_reference) ref.push_back(dataset.window(p.reference_id, p.reference_offset, n_seg));
  }
  auto gather = [](const std::vector<synthworld::ClipTokens>& clips, bool visual) {
    std::vector<const numcore::Tensor<float>*> parts;
    for (const auto& c : clips) parts.push_back(visual ? &c.visual : &c.audio);
    return stack_rows(parts);
  };
  ModelInputs<float> in;
  in.visual_tgt = gather(tgt, true);
  in.audio_tgt = gather(tgt, false);
  if (with_reference) {
    in.visual_ref = gather(ref, true);
    in.audio_ref = gather(ref, false);
  }
  return in;
}

TrainSummary train(RefereeModel<float>& model, const synthworld::Dataset& dataset,
                   const TrainConfig& config, std::ostream* log, const Validator& validator) {
  config.validate();
  if (dataset.config().window_segments != config.model.seg.n_seg) {
    throw std::invalid_argument("train: dataset windows have " +
                                std::to_string(dataset.config().window_segments) +
                                " segments, model expects " +
                                std::to_string(config.model.seg.n_seg));
  }
  const synthworld::SamplingPolicy policy{dataset.config().real_sampling_weight,
                                          dataset.config().window_segments};
  const synthworld::TrainPairSampler sampler(dataset, policy);

  auto params = model.parameters();
  numcore::LrSchedule schedule;
  schedule.base_lr = config.base_lr;
  schedule.min_lr = config.min_lr;
  schedule.warmup_steps = static_cast<std::size_t>(config.warmup_steps);
  schedule.total_steps = static_cast<std::size_t>(config.steps);
  numcore::AdamState<float> adam(params, schedule);

  TrainSummary summary;
  summary.n_params = numcore::count_parameters(params);
  summary.n_params_full = RefereeModel<float>(full_config(config.model), config.seed).parameter_count();
  if (log != nullptr) {
    *log << json{{"event", "start"},
                 {"seed", config.seed},
                 {"n_params", summary.n_params},
                 {"n_params_full", summary.n_params_full},
                 {"n_params_removed", summary.n_params_full - summary.n_params},
                 {"n_train_real", sampler.n_real()},
                 {"n_train_fake", sampler.n_fake()}}
                .dump()
         << '\n';
  }

  numcore::Rng rng(numcore::derive_seed(config.seed, kStreamTrain));
  numcore::ForwardContext ctx{true, config.model.dropout, &rng};
  const bool with_ref = config.model.use_reference;
  double acc_total = 0, acc_rf = 0, acc_id = 0;
  int acc_n = 0;
  std::vector<synthworld::PairRecord> batch(static_cast<std::size_t>(config.batch_size));
  std::vector<int> y_fake(batch.size()), y_id(batch.size());
  for (int step = 0; step < config.steps; ++step) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i] = sampler.next(rng);
      y_fake[i] = batch[i].y_fake;
      y_id[i] = batch[i].y_id_match;
    }
    const auto inputs = make_batch(dataset, batch, with_ref);
    numcore::zero_grads(params);
    const auto out = model.forward(inputs, ctx);
    const auto loss_rf = numcore::cross_entropy(out.rf_logits, std::span<const int>(y_fake));
    const bool id_active = config.model.loss.w_id > 0;
    Tensor<float> loss_id;
    Tensor<float> loss = numcore::scale(loss_rf, static_cast<float>(config.model.loss.w_rf));
    if (id_active) {
      loss_id = numcore::cross_entropy(out.id_logits, std::span<const int>(y_id));
      loss = numcore::add(loss, numcore::scale(loss_id, static_cast<float>(config.model.loss.w_id)));
    }
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw numcore::NumericError("non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    const double lr = numcore::adam_step(params, adam);

    acc_total += value;
    acc_rf += loss_rf.item();
    acc_id += id_active ? loss_id.item() : 0.0;
    ++acc_n;
    const bool last = step + 1 == config.steps;
    if ((step + 1) % config.log_every == 0 || last) {
      summary.final_loss = acc_total / acc_n;
      if (log != nullptr) {
        *log << json{{"step", step + 1},
                     {"lr", lr},
                     {"loss", acc_total / acc_n},
                     {"loss_rf", acc_rf / acc_n},
                     {"loss_id", acc_id / acc_n}}
                    .dump()
             << '\n';
      }
      acc_total = acc_rf = acc_id = 0;
      acc_n = 0;
    }
    if (validator && config.eval_every > 0 && ((step + 1) % config.eval_every == 0 || last)) {
      const json metrics = validator(model);
      if (log != nullptr) *log << json{{"step", step + 1}, {"val", metrics}}.dump() << '\n';
    }
  }
  summary.steps = static_cast<std::size_t>(config.steps);
  return summary;
}

}  // namespace referee::avformer
