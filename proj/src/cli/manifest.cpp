// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "peftbench/cli.hpp"
#include "peftbench/datasets.hpp"
#include "peftbench/error.hpp"

namespace peftbench::cli {

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnv);
  if (!env || !*env) return 0;
  std::uint64_t v = 0;
  const char* end = env + std::char_traits<char>::length(env);
  auto [p, ec] = std::from_chars(env, end, v);
  if (ec != std::errc() || p != end) {
    throw ConfigError(std::string(kSeedEnv) + " must be an unsigned integer, got '" + env + "'");
  }
  return v;
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs[path.string()] = datasets::file_digest(path);
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},     {"tool_version", kToolVersion}, {"seed", seed},
          {"config", config},       {"inputs", inputs},             {"outputs", outputs},
          {"started_at", started_at}, {"finished_at", finished_at}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace peftbench::cli
