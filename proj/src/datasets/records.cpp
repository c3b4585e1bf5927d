// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "peftbench/datasets.hpp"
#include "peftbench/metrics.hpp"
#include "peftbench/rng.hpp"

namespace peftbench::datasets {

namespace {

std::string id_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.dump();
  return {};
}

}  // namespace

std::vector<PairRecord> read_pairs(std::istream& in, const std::string& source_name) {
  std::vector<PairRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(source_name + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("expected a JSON object");
    for (const char* field : {"idx", "code", "nl"}) {
      if (!j.contains(field)) fail(std::string("missing field '") + field + "'");
    }
    PairRecord r;
    r.idx = id_text(j["idx"]);
    if (r.idx.empty()) fail("field 'idx' must be a non-empty string or an integer");
    if (!j["code"].is_string() || !j["nl"].is_string()) {
      fail("fields 'code' and 'nl' must be strings");
    }
    r.code = j["code"].get<std::string>();
    r.nl = j["nl"].get<std::string>();
    if (r.code.empty()) fail("field 'code' is empty");
    if (r.nl.empty()) fail("field 'nl' is empty");
    if (!seen.insert(r.idx).second) fail("duplicate idx '" + r.idx + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PairRecord> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_pairs(in, path.string());
}

void write_pairs(std::ostream& out, const std::vector<PairRecord>& records) {
  for (const auto& r : records) {
    out << nlohmann::json{{"idx", r.idx}, {"code", r.code}, {"nl", r.nl}}.dump() << '\n';
  }
}

std::string_view to_string(Direction d) {
  return d == Direction::summarize ? "summarize" : "generate";
}

Direction parse_direction(std::string_view s) {
  if (s == "summarize") return Direction::summarize;
  if (s == "generate") return Direction::generate;
  throw ConfigError("task must be one of {summarize, generate}, got '" + std::string(s) + "'");
}

std::vector<std::string> tokenize(std::string_view text, TextKind kind) {
  return kind == TextKind::code ? metrics::tokenize_code(text) : metrics::tokenize_nl(text);
}

std::vector<Sample> frame(const std::vector<PairRecord>& records, Direction direction) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Sample s{r.idx, TextKind::code, TextKind::nl, r.code, r.nl};
    out.push_back(std::move(s));
  }
  return direction == Direction::summarize ? out : reverse_direction(std::move(out));
}

std::vector<Sample> reverse_direction(std::vector<Sample> samples) {
  for (auto& s : samples) {
    std::swap(s.input, s.target);
    std::swap(s.input_kind, s.target_kind);
  }
  return samples;
}

void SplitSpec::validate() const {
  if (train < 0 || valid < 0 || test < 0) throw ConfigError("split fractions must be >= 0");
  if (std::abs(train + valid + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

Split split(const std::vector<PairRecord>& records, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng rng(spec.seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const auto n = static_cast<double>(records.size());
  const auto n_valid = static_cast<std::size_t>(std::floor(n * spec.valid + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * spec.test + 1e-9));
  Split s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const PairRecord& r = records[order[i]];
    if (i < n_valid) {
      s.valid.push_back(r);
    } else if (i < n_valid + n_test) {
      s.test.push_back(r);
    } else {
      s.train.push_back(r);
    }
  }
  return s;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace peftbench::datasets
