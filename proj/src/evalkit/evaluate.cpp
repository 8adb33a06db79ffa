// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/evalkit/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>
#include <string>

#include "referee/avformer/train.hpp"
#include "referee/numcore/random.hpp"

namespace referee::evalkit {

using synthworld::Manipulation;
using synthworld::PairRecord;

void ModelScorer::score(const synthworld::Dataset& dataset, std::span<const PairRecord> windows,
                        std::span<Probs> out) const {
  numcore::NoGradGuard no_grad;
  const bool with_ref = model_->config().use_reference;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_) {
    const std::size_t n = std::min(batch_, windows.size() - begin);
    const auto inputs = avformer::make_batch(dataset, windows.subspan(begin, n), with_ref);
    const auto logits = model_->forward(inputs).rf_logits;
    auto l = logits.data();
    for (std::size_t i = 0; i < n; ++i) {
      // Two-class softmax in 64-bit.
      const double a = l[2 * i], b = l[2 * i + 1];
      const double m = std::max(a, b);
      const double ea = std::exp(a - m), eb = std::exp(b - m);
      out[begin + i] = {ea / (ea + eb), eb / (ea + eb)};
    }
  }
}

void OracleScorer::score(const synthworld::Dataset&, std::span<const PairRecord> windows,
                         std::span<Probs> out) const {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double y = windows[i].y_fake;
    out[i] = {1.0 - y, y};
  }
}

void ConstantScorer::score(const synthworld::Dataset&, std::span<const PairRecord> windows,
                           std::span<Probs> out) const {
  for (std::size_t i = 0; i < windows.size(); ++i) out[i] = {1.0 - p_fake_, p_fake_};
}

void RandomScorer::score(const synthworld::Dataset&, std::span<const PairRecord> windows,
                         std::span<Probs> out) const {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto key = (static_cast<std::uint64_t>(windows[i].target_id) << 20) ^
                     static_cast<std::uint64_t>(windows[i].target_offset);
    numcore::Rng rng(numcore::derive_seed(seed_, key));
    const double p = numcore::uniform01(rng);
    out[i] = {1.0 - p, p};
  }
}

std::vector<int> window_offsets(const synthworld::Dataset& dataset, int clip_id,
                                const avformer::ModelConfig& model_config,
                                const EvalOptions& options) {
  const auto& seg = model_config.seg;
  const double stride = seg.seg_stride_s();
  const int segments = dataset.clip(clip_id).spec.duration_segments;
  const int max_offset = segments - seg.n_seg;
  if (max_offset < 0) {
    throw std::invalid_argument("clip " + std::to_string(clip_id) + " has " +
                                std::to_string(segments) + " segments, fewer than one window");
  }
  const double duration = (segments - 1) * stride + seg.seg_duration_s;
  const WindowPlan plan = plan_windows(duration, options.window_s, options.overlap_frac);
  std::vector<int> offsets;
  for (double start : plan.starts) {
    const int k = std::clamp(static_cast<int>(std::lround(start / stride)), 0, max_offset);
    if (offsets.empty() || offsets.back() != k) offsets.push_back(k);
  }
  return offsets;
}

MetricsReport compute_report(std::span<const ClipScore> clips, synthworld::Split split) {
  MetricsReport r;
  r.split = std::string(synthworld::to_string(split));
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const auto& c : clips) {
    scores.push_back(c.score);
    labels.push_back(c.y_fake);
    (c.y_fake == 1 ? r.n_fake : r.n_real)++;
    correct += c.prediction == c.y_fake ? 1 : 0;
  }
  if (clips.empty()) throw std::invalid_argument("compute_report: empty split");
  r.acc = static_cast<double>(correct) / static_cast<double>(clips.size());
  r.auc = auc(scores, labels);
  r.ap = average_precision(scores, labels);
  for (Manipulation m : synthworld::kAllManipulations) {
    if (m == Manipulation::kReal) continue;
    std::vector<double> s;
    std::vector<int> y;
    std::size_t n = 0;
    for (const auto& c : clips) {
      if (c.manipulation != Manipulation::kReal && c.manipulation != m) continue;
      s.push_back(c.score);
      y.push_back(c.y_fake);
      n += c.y_fake;
    }
    if (n == 0) continue;
    r.per_manipulation[std::string(synthworld::to_string(m))] = {auc(s, y),
                                                                 average_precision(s, y), n};
  }
  return r;
}

EvalResult evaluate(const WindowScorer& scorer, const synthworld::Dataset& dataset,
                    synthworld::Split split, const avformer::ModelConfig& model_config,
                    const EvalOptions& options) {
  const auto pairs = synthworld::eval_pairs(dataset, split);
  if (pairs.empty()) {
    throw std::invalid_argument("evaluate: split " + std::string(synthworld::to_string(split)) +
                                " is empty");
  }
  std::vector<PairRecord> windows;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (int k : window_offsets(dataset, pairs[i].target_id, model_config, options)) {
      PairRecord w = pairs[i];
      w.target_offset = k;
      w.reference_offset = 0;
      windows.push_back(w);
      owner.push_back(i);
    }
  }
  std::vector<Probs> probs(windows.size());
  scorer.score(dataset, windows, probs);

  EvalResult result;
  std::size_t w = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::size_t begin = w;
    while (w < windows.size() && owner[w] == i) ++w;
    const Aggregate agg = aggregate(std::span<const Probs>(probs).subspan(begin, w - begin));
    result.clips.push_back({pairs[i].target_id, pairs[i].manipulation, pairs[i].y_fake,
                            agg.prob[1], agg.prediction, w - begin});
  }
  result.report = compute_report(result.clips, split);
  return result;
}

void write_scores_csv(std::ostream& out, std::span<const ClipScore> clips) {
  out << "clip_id,manipulation,y_fake,score,prediction,n_windows\n";
  out << std::setprecision(17);
  for (const auto& c : clips) {
    out << c.clip_id << ',' << synthworld::to_string(c.manipulation) << ',' << c.y_fake << ','
        << c.score << ',' << c.prediction << ',' << c.n_windows << '\n';
  }
}

}  // namespace referee::evalkit
