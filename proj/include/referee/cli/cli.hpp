// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_CLI_CLI_HPP_
#define REFEREE_CLI_CLI_HPP_

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace referee::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point shared by the `referee` executable and the tests.
/// Writes results to `out` and a single "error: ..." line to `err` on
/// failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Applies "a.b.c=value" to a JSON object. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& config, std::string_view assignment);

std::string_view code_version();

}  // namespace referee::cli

#endif  // REFEREE_CLI_CLI_HPP_
