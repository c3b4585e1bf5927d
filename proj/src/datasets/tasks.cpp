// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <fstream>
#include <optional>
#include <set>

#include "peftbench/datasets.hpp"

namespace peftbench::datasets {

namespace {

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return !minilang::is_keyword(s);
}

}  // namespace

std::vector<GenTask> read_tasks(std::istream& in, const std::string& source_name) {
  std::vector<GenTask> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string context = source_name + ":" + std::to_string(lineno);
    auto fail = [&](const std::string& why) { throw DataError(context + ": " + why); };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("expected a JSON object");
    if (!j.contains("task_id") || !j["task_id"].is_string()) fail("missing string field 'task_id'");
    GenTask t;
    t.task_id = j["task_id"].get<std::string>();
    context += " (task " + t.task_id + ")";
    if (!seen.insert(t.task_id).second) fail("duplicate task_id");
    for (const char* field : {"prompt", "entry_point"}) {
      if (!j.contains(field) || !j[field].is_string()) {
        fail(std::string("missing string field '") + field + "'");
      }
    }
    t.prompt = j["prompt"].get<std::string>();
    t.entry_point = j["entry_point"].get<std::string>();
    if (!valid_identifier(t.entry_point)) fail("entry_point is not a valid identifier");
    if (!j.contains("tests") || !j["tests"].is_array()) fail("missing array field 'tests'");
    if (j["tests"].empty()) fail("task has no tests");
    for (const auto& tj : j["tests"]) {
      if (!tj.is_object() || !tj.contains("args") || !tj["args"].is_array() ||
          !tj.contains("expected")) {
        fail("each test needs 'args' (array) and 'expected'");
      }
      TaskTest test;
      try {
        for (const auto& a : tj["args"]) test.args.push_back(minilang::value_from_json(a));
        test.expected = minilang::value_from_json(tj["expected"]);
      } catch (const DataError& e) {
        fail(e.what());
      }
      t.tests.push_back(std::move(test));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<GenTask> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_tasks(in, path.string());
}

nlohmann::json task_to_json(const GenTask& task) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : task.tests) {
    nlohmann::json args = nlohmann::json::array();
    for (const auto& a : t.args) args.push_back(minilang::value_to_json(a));
    tests.push_back({{"args", args}, {"expected", minilang::value_to_json(t.expected)}});
  }
  return {{"task_id", task.task_id},
          {"prompt", task.prompt},
          {"entry_point", task.entry_point},
          {"tests", tests}};
}

CandidateVerdict run_candidate(const GenTask& task, std::string_view source,
                               std::uint64_t step_budget) {
  CandidateVerdict v;
  v.passed = true;
  std::optional<minilang::Program> program;
  std::string parse_message;
  try {
    program.emplace(minilang::parse_source(source));
  } catch (const minilang::ParseError& e) {
    parse_message = e.what();
  }
  for (const auto& test : task.tests) {
    TestVerdict tv;
    if (!program) {
      tv.status = minilang::ExecStatus::parse_error;
      tv.message = parse_message;
    } else {
      const auto outcome = minilang::execute(*program, task.entry_point, test.args, step_budget);
      tv.status = outcome.status;
      tv.message = outcome.message;
      tv.passed = outcome.status == minilang::ExecStatus::value &&
                  minilang::values_match(outcome.value, test.expected);
      if (outcome.status == minilang::ExecStatus::value && !tv.passed) {
        tv.message = "expected " + minilang::to_display(test.expected) + ", got " +
                     minilang::to_display(outcome.value);
      }
    }
    v.passed = v.passed && tv.passed;
    v.tests.push_back(std::move(tv));
  }
  return v;
}

}  // namespace peftbench::datasets
