// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_NUMCORE_RANDOM_HPP_
#define REFEREE_NUMCORE_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace referee::numcore {

// std::mt19937_64 is fully specified by the standard, but the std
// distributions are not; these helpers keep every draw bit-reproducible
// across standard libraries.
using Rng = std::mt19937_64;

/// Mixes (seed, stream) into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Uniform in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

/// Normal(0, stddev) resampled until |x| <= bound * stddev.
double truncated_normal(Rng& rng, double stddev, double bound = 2.0);

}  // namespace referee::numcore

#endif  // REFEREE_NUMCORE_RANDOM_HPP_
