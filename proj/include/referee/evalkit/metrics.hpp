// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_EVALKIT_METRICS_HPP_
#define REFEREE_EVALKIT_METRICS_HPP_

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace referee::evalkit {

struct WindowPlan {
  double window_s = 2.88;
  double overlap_frac = 0.05;
  std::vector<double> starts;
};

/// Starts at k * window_s * (1 - overlap_frac) while the window fits, plus
/// one end-aligned window when the regular grid stops short of the end.
/// Throws std::invalid_argument when the clip is shorter than one window.
WindowPlan plan_windows(double duration_s, double window_s = 2.88, double overlap_frac = 0.05);

using Probs = std::array<double, 2>;  // {real, fake}

struct Aggregate {
  Probs prob{0.0, 0.0};
  int prediction = 0;  // argmax, ties to real
};

/// Mean of per-window probabilities, then argmax.
Aggregate aggregate(std::span<const Probs> window_probs);

/// Mann-Whitney AUC with half credit for ties. labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Sum over descending score groups of (R_k - R_{k-1}) * P_k.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct GroupMetrics {
  double auc = 0.0;
  double ap = 0.0;
  std::size_t n = 0;  // fakes of this type
};

struct MetricsReport {
  std::string split;
  double acc = 0.0;
  double auc = 0.0;
  double ap = 0.0;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  /// Each fake type against every real clip of the split.
  std::map<std::string, GroupMetrics> per_manipulation;
};

void to_json(nlohmann::json& j, const MetricsReport& r);

}  // namespace referee::evalkit

#endif  // REFEREE_EVALKIT_METRICS_HPP_
