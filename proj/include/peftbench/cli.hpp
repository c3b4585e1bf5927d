// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace peftbench::cli {

inline constexpr const char* kToolVersion = "0.3.0";

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitVerification = 5,
};

/// Environment variable that overrides the default seed.
inline constexpr const char* kSeedEnv = "PEFTBENCH_SEED";

/// Seed used when --seed is absent: PEFTBENCH_SEED if set, else 0. Throws
/// ConfigError when the variable is not an unsigned integer.
std::uint64_t default_seed();

/// Reproducibility record written next to every result file. Result files
/// carry {"manifest": "<file name>"} so they stay free of timestamps.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> FNV-1a digest
  std::vector<std::string> outputs;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// UTC, ISO 8601 with seconds.
std::string utc_timestamp();

/// Writes pretty-printed JSON followed by a newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace peftbench::cli
