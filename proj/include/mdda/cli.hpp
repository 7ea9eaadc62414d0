/*
 * Copyright 2026 The mdda-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Subcommands in stage order.
const std::vector<std::string>& subcommands();

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Invocation {
  std::string subcommand;
  std::filesystem::path config_path;
  std::filesystem::path output_dir = "out";
  std::optional<std::uint64_t> seed;
  int verbosity = 1;  // 0 with --quiet
  /// Set when --help was given; dispatch prints it and exits 0.
  std::optional<std::string> help;
};

/// Parses arguments without the program name. env_out is the value of
/// MDDA_OUT, used when --out is absent. Throws UsageError.
Invocation parse_args(std::span<const std::string> args, std::optional<std::string> env_out = std::nullopt);

/// Runs one invocation and returns its exit code. Errors go to err.
int dispatch(const Invocation& inv, std::ostream& out, std::ostream& err);

/// parse_args + dispatch with the exit-code contract; reads MDDA_OUT.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err,
        std::optional<std::string> env_out = std::nullopt);

}  // namespace mdda::cli
