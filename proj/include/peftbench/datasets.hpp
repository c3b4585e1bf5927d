// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

// JSONL ingestion for code/description pairs and unit-tested generation
// tasks, plus splitting, vocabulary building and model framing.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "peftbench/error.hpp"
#include "peftbench/minilang.hpp"
#include "peftbench/trainer.hpp"

namespace peftbench::datasets {

/// One line of a pairs file: {"idx": ..., "code": "...", "nl": "..."}.
/// Numeric idx values are kept as their decimal text.
struct PairRecord {
  std::string idx;
  std::string code;
  std::string nl;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

std::vector<PairRecord> read_pairs(std::istream& in, const std::string& source_name);
/// Throws DataError naming the file, line and field on any violation.
std::vector<PairRecord> load_pairs(const std::filesystem::path& path);
void write_pairs(std::ostream& out, const std::vector<PairRecord>& records);

enum class Direction {
  summarize,  // code -> nl
  generate,   // nl -> code
};

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

enum class TextKind { code, nl };

std::vector<std::string> tokenize(std::string_view text, TextKind kind);

/// A record framed for one direction.
struct Sample {
  std::string id;
  TextKind input_kind = TextKind::code;
  TextKind target_kind = TextKind::nl;
  std::string input;
  std::string target;

  friend bool operator==(const Sample&, const Sample&) = default;
};

std::vector<Sample> frame(const std::vector<PairRecord>& records, Direction direction);

/// Swaps input and target. Applying it twice gives back the argument.
std::vector<Sample> reverse_direction(std::vector<Sample> samples);

struct SplitSpec {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<PairRecord> train;
  std::vector<PairRecord> valid;
  std::vector<PairRecord> test;
};

/// Seeded shuffle, then floor(n * valid) and floor(n * test) records go to
/// valid and test; the remainder goes to train.
Split split(const std::vector<PairRecord>& records, const SplitSpec& spec);

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kSep = 3;
inline constexpr int kUnk = 4;
inline constexpr int kNumSpecials = 5;

class Vocab {
 public:
  /// Specials only.
  Vocab();
  /// Specials followed by `tokens` in the given order.
  explicit Vocab(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  /// Drops special ids.
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

/// Tokens from both fields (code by mini-language lexemes, nl by word and
/// punctuation) that occur at least min_count times, sorted lexicographically.
Vocab build_vocab(const std::vector<PairRecord>& records, std::size_t min_count = 1);

/// BOS input SEP target EOS, with targets shifted by one and the loss masked
/// up to and including the SEP position.
Example encode_example(const Sample& sample, const Vocab& vocab);
std::vector<Example> encode_all(const std::vector<Sample>& samples, const Vocab& vocab);
/// BOS input SEP, the generation prompt.
std::vector<int> encode_prompt(const Sample& sample, const Vocab& vocab);
/// Canonical text of a token sequence: tokens joined by single spaces.
std::string render(const std::vector<std::string>& tokens);

struct TaskTest {
  std::vector<minilang::Value> args;
  minilang::Value expected;
};

/// {"task_id", "prompt", "entry_point", "tests": [{"args": [...], "expected": ...}]}
struct GenTask {
  std::string task_id;
  std::string prompt;
  std::string entry_point;
  std::vector<TaskTest> tests;
};

std::vector<GenTask> read_tasks(std::istream& in, const std::string& source_name);
std::vector<GenTask> load_tasks(const std::filesystem::path& path);
nlohmann::json task_to_json(const GenTask& task);

struct TestVerdict {
  minilang::ExecStatus status = minilang::ExecStatus::value;
  bool passed = false;
  std::string message;
};

struct CandidateVerdict {
  bool passed = false;  // every test passed
  std::vector<TestVerdict> tests;
};

/// Runs `source` against every test of `task` in the sandbox. Never throws
/// for candidate faults.
CandidateVerdict run_candidate(const GenTask& task, std::string_view source,
                               std::uint64_t step_budget = minilang::kDefaultStepBudget);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace peftbench::datasets
