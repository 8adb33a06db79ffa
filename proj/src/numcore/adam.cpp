// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/numcore/adam.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace referee::numcore {

void LrSchedule::validate() const {
  if (!(min_lr > 0.0) || !(min_lr <= base_lr)) {
    throw std::invalid_argument("lr schedule requires 0 < min_lr <= base_lr");
  }
  if (total_steps == 0 || warmup_steps >= total_steps) {
    throw std::invalid_argument("lr schedule requires warmup_steps < total_steps");
  }
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const std::size_t decay_span = total_steps - 1 - warmup_steps;
  if (decay_span == 0) return base_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) /
                        static_cast<double>(decay_span));
  return min_lr + (base_lr - min_lr) * 0.5 *
                      (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
AdamState<T>::AdamState(const ParamList<T>& params, LrSchedule sched)
    : schedule(sched) {
  schedule.validate();
  for (const auto& p : params) {
    m.emplace_back(p.tensor.numel(), T(0));
    v.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
double adam_step(ParamList<T>& params, AdamState<T>& state) {
  if (params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: state tracks " +
                                std::to_string(state.m.size()) +
                                " parameters, got " +
                                std::to_string(params.size()));
  }
  if (state.step >= state.schedule.total_steps) {
    throw std::logic_error("adam_step: schedule exhausted at step " +
                           std::to_string(state.step));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params[i].tensor;
    if (t.numel() != state.m[i].size()) {
      throw ShapeError("adam_step: moment size mismatch for " + params[i].name);
    }
    for (T g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter " + params[i].name);
      }
    }
  }

  const double lr = state.schedule.at(state.step);
  const double t = static_cast<double>(state.step + 1);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(state.beta1, t));
  const T corr2 = static_cast<T>(1.0 - std::pow(state.beta2, t));
  const T step_lr = static_cast<T>(lr);
  const T eps = static_cast<T>(state.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    auto value = tensor.data();
    auto grad = tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has_grad = !grad.empty();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const T g = has_grad ? grad[j] : T(0);
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T mhat = m[j] / corr1;
      const T vhat = v[j] / corr2;
      value[j] -= step_lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  ++state.step;
  return lr;
}

template struct AdamState<float>;
template struct AdamState<double>;
template double adam_step(ParamList<float>&, AdamState<float>&);
template double adam_step(ParamList<double>&, AdamState<double>&);

}  // namespace referee::numcore
