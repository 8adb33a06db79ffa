// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/matchnet/matcher.hpp"

#include <stdexcept>

namespace referee::matchnet {

void MatchConfig::validate(int d) const {
  if (depth < 0 || heads <= 0 || ffn_mult <= 0) {
    throw std::invalid_argument("match config: depth must be >= 0, heads and ffn_mult positive");
  }
  if (d % heads != 0) {
    throw std::invalid_argument("match config: model dimension " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
}

}  // namespace referee::matchnet
