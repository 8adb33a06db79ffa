// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/idb/bottleneck.hpp"

#include <stdexcept>

namespace referee::idb {

void IdbConfig::validate(int d) const {
  if (n_q <= 0 || depth < 0 || heads <= 0 || ffn_mult <= 0) {
    throw std::invalid_argument("idb config: n_q, heads and ffn_mult must be positive");
  }
  if (d % heads != 0) {
    throw std::invalid_argument("idb config: model dimension " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
}

}  // namespace referee::idb
