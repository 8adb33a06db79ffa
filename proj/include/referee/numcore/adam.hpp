// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_NUMCORE_ADAM_HPP_
#define REFEREE_NUMCORE_ADAM_HPP_

#include <cstddef>
#include <vector>

#include "referee/numcore/nn.hpp"

namespace referee::numcore {

/// Linear warmup from 0 to base_lr, then cosine decay to min_lr at the last
/// step.
struct LrSchedule {
  double base_lr = 1e-5;
  double min_lr = 1e-6;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  void validate() const;
  double at(std::size_t step) const;
};

template <typename T>
struct AdamState {
  std::size_t step = 0;
  LrSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;
  AdamState(const ParamList<T>& params, LrSchedule schedule);
};

/// One bias-corrected Adam update using the parameters' accumulated grads.
/// Parameters without a grad buffer are treated as having zero gradient.
/// Returns the learning rate used. Throws NumericError naming the first
/// parameter with a non-finite gradient; nothing is updated in that case.
template <typename T>
double adam_step(ParamList<T>& params, AdamState<T>& state);

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace referee::numcore

#endif  // REFEREE_NUMCORE_ADAM_HPP_
