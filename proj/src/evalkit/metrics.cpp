// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace referee::evalkit {

namespace {

constexpr double kTimeEps = 1e-9;

void check_inputs(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(scores.size()) +
                                " scores vs " + std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument(std::string(what) + ": labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument(std::string(what) + ": non-finite score at " +
                                  std::to_string(i));
    }
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

WindowPlan plan_windows(double duration_s, double window_s, double overlap_frac) {
  if (!(window_s > 0) || !(overlap_frac >= 0 && overlap_frac < 1)) {
    throw std::invalid_argument("plan_windows: need window > 0 and overlap in [0, 1)");
  }
  if (duration_s + kTimeEps < window_s) {
    throw std::invalid_argument("plan_windows: clip of " + std::to_string(duration_s) +
                                " s is shorter than one " + std::to_string(window_s) +
                                " s window; pad or reject it");
  }
  WindowPlan plan{window_s, overlap_frac, {}};
  const double stride = window_s * (1.0 - overlap_frac);
  for (int k = 0;; ++k) {
    const double start = k * stride;
    if (start + window_s > duration_s + kTimeEps) break;
    plan.starts.push_back(start);
  }
  const double covered = plan.starts.back() + window_s;
  if (covered + kTimeEps < duration_s) {
    const double last = duration_s - window_s;
    if (last > plan.starts.back() + kTimeEps) plan.starts.push_back(last);
  }
  return plan;
}

Aggregate aggregate(std::span<const Probs> window_probs) {
  if (window_probs.empty()) throw std::invalid_argument("aggregate: no windows");
  Aggregate out;
  for (const Probs& p : window_probs) {
    out.prob[0] += p[0];
    out.prob[1] += p[1];
  }
  const double n = static_cast<double>(window_probs.size());
  out.prob[0] /= n;
  out.prob[1] /= n;
  out.prediction = out.prob[1] > out.prob[0] ? 1 : 0;
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, "auc");
  const auto order = descending(scores);
  std::uint64_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc: needs both classes (got " + std::to_string(n_pos) +
                                " positives, " + std::to_string(n_neg) + " negatives)");
  }
  // Sweep tie groups from lowest to highest score, counting for every
  // positive the negatives strictly below and level with it.
  std::uint64_t greater = 0, ties = 0, neg_below = 0;
  std::size_t end = order.size();
  while (end > 0) {
    std::size_t begin = end - 1;
    while (begin > 0 && scores[order[begin - 1]] == scores[order[end - 1]]) --begin;
    std::uint64_t pos_g = 0, neg_g = 0;
    for (std::size_t i = begin; i < end; ++i) (labels[order[i]] == 1 ? pos_g : neg_g)++;
    greater += pos_g * neg_below;
    ties += pos_g * neg_g;
    neg_below += neg_g;
    end = begin;
  }
  return static_cast<double>(2 * greater + ties) / static_cast<double>(2 * n_pos * n_neg);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, "average_precision");
  std::uint64_t n_pos = 0;
  for (int y : labels) n_pos += y == 1 ? 1 : 0;
  if (n_pos == 0) throw std::invalid_argument("average_precision: no positive labels");
  const auto order = descending(scores);
  const double p = static_cast<double>(n_pos);
  std::uint64_t tp = 0, fp = 0;
  double ap = 0.0, prev_recall = 0.0;
  std::size_t begin = 0;
  while (begin < order.size()) {
    std::size_t end = begin + 1;
    while (end < order.size() && scores[order[end]] == scores[order[begin]]) ++end;
    for (std::size_t i = begin; i < end; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    const double recall = static_cast<double>(tp) / p;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    begin = end;
  }
  return ap;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, m] : r.per_manipulation) {
    per[name] = {{"auc", m.auc}, {"ap", m.ap}, {"n", m.n}};
  }
  j = nlohmann::json{{"split", r.split},     {"acc", r.acc},       {"auc", r.auc},
                     {"ap", r.ap},           {"n_real", r.n_real}, {"n_fake", r.n_fake},
                     {"per_manipulation", per}};
}

}  // namespace referee::evalkit
