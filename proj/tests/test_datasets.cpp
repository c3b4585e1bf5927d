// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "peftbench/datasets.hpp"
#include "peftbench/error.hpp"

using namespace peftbench;
using namespace peftbench::datasets;

namespace {

const std::filesystem::path kData = PEFTBENCH_DATA_DIR;

std::vector<PairRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return read_pairs(in, "mem.jsonl");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

std::vector<PairRecord> numbered(std::size_t n) {
  std::vector<PairRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({std::to_string(i), "fn f() { return " + std::to_string(i) + " }", "n"});
  return out;
}

}  // namespace

TEST_CASE("load pairs") {
  SUBCASE("empty input") { CHECK(parse("").empty()); }
  SUBCASE("three lines keep their order") {
    const auto r = parse(
        "{\"idx\": \"c\", \"code\": \"fn f() {}\", \"nl\": \"one\"}\n"
        "{\"idx\": 7, \"code\": \"fn g() {}\", \"nl\": \"two\"}\n"
        "{\"idx\": \"a\", \"code\": \"fn h() {}\", \"nl\": \"three\"}\n");
    REQUIRE(r.size() == 3);
    CHECK(r[0].idx == "c");
    CHECK(r[1].idx == "7");
    CHECK(r[2].nl == "three");
  }
  SUBCASE("missing nl names the line and field") {
    const std::string e = error_of("{\"idx\": \"a\", \"code\": \"x\"}\n");
    CHECK(e.find("mem.jsonl:1") != std::string::npos);
    CHECK(e.find("'nl'") != std::string::npos);
  }
  SUBCASE("schema violations") {
    CHECK(error_of("{\"idx\": \"a\", \"code\": \"x\", \"nl\": \"\"}\n").find(":1") !=
          std::string::npos);
    CHECK(error_of("{\"idx\": \"a\", \"code\": \"x\", \"nl\": \"y\"}\n"
                   "{\"idx\": \"a\", \"code\": \"x\", \"nl\": \"y\"}\n")
              .find(":2") != std::string::npos);
    CHECK(error_of("not json\n").find(":1") != std::string::npos);
    CHECK(error_of("[1, 2]\n").find(":1") != std::string::npos);
    CHECK(error_of("{\"idx\": \"a\", \"code\": 3, \"nl\": \"y\"}\n").find("code") !=
          std::string::npos);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_pairs(kData / "does_not_exist.jsonl"), DataError);
  }
  SUBCASE("bundled fixture") {
    const auto r = load_pairs(kData / "memorize20.jsonl");
    CHECK(r.size() == 20);
  }
}

TEST_CASE("pairs round trip") {
  const auto a = load_pairs(kData / "memorize20.jsonl");
  std::ostringstream out;
  write_pairs(out, a);
  std::istringstream in(out.str());
  CHECK(read_pairs(in, "copy") == a);
}

TEST_CASE("framing and reversal") {
  const auto records = load_pairs(kData / "memorize20.jsonl");
  const std::vector<PairRecord> five(records.begin(), records.begin() + 5);
  const auto summ = frame(five, Direction::summarize);
  const auto gen = frame(five, Direction::generate);
  SUBCASE("summarize reads code and writes nl") {
    CHECK(summ[0].input == five[0].code);
    CHECK(summ[0].target == five[0].nl);
    CHECK(summ[0].input_kind == TextKind::code);
    CHECK(summ[0].target_kind == TextKind::nl);
  }
  SUBCASE("reversal swaps input and target") {
    const auto rev = reverse_direction(summ);
    CHECK(rev == gen);
    for (std::size_t i = 0; i < 5; ++i) CHECK(rev[i].target == summ[i].input);
  }
  SUBCASE("reversal is an involution") {
    CHECK(reverse_direction(reverse_direction(summ)) == summ);
  }
  SUBCASE("encoded sequence starts with the input tokens") {
    const Vocab v = build_vocab(records);
    const Example e = encode_example(summ[0], v);
    const auto code = tokenize(five[0].code, TextKind::code);
    REQUIRE(e.tokens.size() > code.size() + 1);
    CHECK(e.tokens[0] == kBos);
    CHECK(v.token(e.tokens[1]) == code[0]);
    const Example r = encode_example(reverse_direction(summ)[0], v);
    const auto nl = tokenize(five[0].nl, TextKind::nl);
    CHECK(v.token(r.tokens[1]) == nl[0]);
  }
  SUBCASE("direction names") {
    CHECK(parse_direction("generate") == Direction::generate);
    CHECK_THROWS_AS(parse_direction("translate"), ConfigError);
  }
}

TEST_CASE("example encoding") {
  const Vocab v({"a", "b", "c", "x"});
  const Sample s{"1", TextKind::nl, TextKind::nl, "a b", "c x"};
  const Example e = encode_example(s, v);
  // Sequence: BOS a b SEP c x EOS.
  const int a = v.id("a"), b = v.id("b"), c = v.id("c"), x = v.id("x");
  CHECK(e.tokens == std::vector<int>{kBos, a, b, kSep, c, x});
  CHECK(e.targets == std::vector<int>{kIgnoreTarget, kIgnoreTarget, kIgnoreTarget, c, x, kEos});
  CHECK(encode_prompt(s, v) == std::vector<int>{kBos, a, b, kSep});
  const Sample unknown{"2", TextKind::nl, TextKind::nl, "zzz", "a"};
  CHECK(encode_prompt(unknown, v)[1] == kUnk);
}

TEST_CASE("split") {
  SUBCASE("all train") {
    SplitSpec spec{1.0, 0.0, 0.0, 3};
    const Split s = split(numbered(17), spec);
    CHECK(s.train.size() == 17);
    CHECK(s.valid.empty());
    CHECK(s.test.empty());
  }
  SUBCASE("80/10/10 of 100") {
    const Split s = split(numbered(100), SplitSpec{});
    CHECK(s.train.size() == 80);
    CHECK(s.valid.size() == 10);
    CHECK(s.test.size() == 10);
  }
  SUBCASE("floor then remainder to train") {
    const Split s = split(numbered(19), SplitSpec{});
    CHECK(s.valid.size() == 1);
    CHECK(s.test.size() == 1);
    CHECK(s.train.size() == 17);
  }
  SUBCASE("deterministic, disjoint and exhaustive") {
    SplitSpec spec{0.6, 0.2, 0.2, 9};
    const auto records = numbered(53);
    const Split a = split(records, spec);
    const Split b = split(records, spec);
    CHECK(a.train == b.train);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);
    std::multiset<std::string> ids;
    for (const auto* part : {&a.train, &a.valid, &a.test})
      for (const auto& r : *part) ids.insert(r.idx);
    CHECK(ids.size() == 53);
    CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 53);
    spec.seed = 10;
    CHECK(split(records, spec).train != a.train);
  }
  SUBCASE("fractions must sum to one") {
    SplitSpec spec{0.5, 0.1, 0.1, 0};
    CHECK_THROWS_AS(split(numbered(5), spec), ConfigError);
  }
}

TEST_CASE("vocabulary") {
  SUBCASE("empty corpus gives the specials") {
    const Vocab v = build_vocab({});
    CHECK(v.size() == 5);
    CHECK(v.token(kPad) == "<pad>");
    CHECK(v.id("anything") == kUnk);
  }
  SUBCASE("frequency threshold") {
    const std::vector<PairRecord> records{
        {"1", "fn f() { return 1 }", "gives one"},
        {"2", "fn g() { return 2 }", "a zebra"},
        {"3", "fn h() { return 3 }", "gives three"},
    };
    // Independent count over the tokenised fields.
    std::map<std::string, int> freq;
    for (const auto& r : records) {
      for (const auto& t : tokenize(r.code, TextKind::code)) ++freq[t];
      for (const auto& t : tokenize(r.nl, TextKind::nl)) ++freq[t];
    }
    CHECK(freq["return"] == 3);
    CHECK(freq["zebra"] == 1);
    const Vocab v = build_vocab(records, 2);
    CHECK(v.contains("return"));
    CHECK_FALSE(v.contains("zebra"));
    CHECK(v.id("zebra") == kUnk);
    std::size_t kept = 0;
    for (const auto& [t, c] : freq)
      if (c >= 2) ++kept;
    CHECK(v.size() == 5 + kept);
    const Vocab all = build_vocab(records, 1);
    for (const auto& [t, c] : freq) CHECK(all.contains(t));
    CHECK(all.size() == 5 + freq.size());
  }
  SUBCASE("ids are stable and sorted") {
    const auto records = load_pairs(kData / "memorize20.jsonl");
    const Vocab a = build_vocab(records);
    const Vocab b = build_vocab(records);
    CHECK(a == b);
    for (std::size_t i = kNumSpecials + 1; i < a.size(); ++i)
      CHECK(a.tokens()[i - 1] < a.tokens()[i]);
  }
  SUBCASE("json round trip and decode") {
    const Vocab v({"a", "b"});
    CHECK(Vocab::from_json(nlohmann::json::parse(v.to_json().dump())) == v);
    CHECK(v.decode({kBos, v.id("a"), kSep, v.id("b"), kEos, kUnk}) ==
          std::vector<std::string>{"a", "b", "<unk>"});
    CHECK_THROWS(Vocab({"a", "a"}));
  }
}

TEST_CASE("tasks") {
  SUBCASE("bundled suite") {
    const auto tasks = load_tasks(kData / "tasks16.jsonl");
    CHECK(tasks.size() == 16);
    for (const auto& t : tasks) CHECK(t.tests.size() >= 3);
  }
  SUBCASE("add fixture") {
    const auto tasks = load_tasks(kData / "task_add.jsonl");
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].tests.size() == 5);
    CHECK(tasks[0].entry_point == "add");
  }
  SUBCASE("schema errors carry the task id") {
    auto err = [](const std::string& line) -> std::string {
      std::istringstream in(line);
      try {
        read_tasks(in, "t.jsonl");
      } catch (const DataError& e) {
        return e.what();
      }
      return "";
    };
    const std::string zero =
        err("{\"task_id\": \"t9\", \"prompt\": \"p\", \"entry_point\": \"f\", \"tests\": []}");
    CHECK(zero.find("t9") != std::string::npos);
    CHECK(err("{\"task_id\": \"t1\", \"prompt\": \"p\", \"entry_point\": \"1f\", "
              "\"tests\": [{\"args\": [], \"expected\": 1}]}")
              .find("t1") != std::string::npos);
    CHECK(err("{\"task_id\": \"t2\", \"prompt\": \"p\", \"entry_point\": \"f\", "
              "\"tests\": [{\"args\": 3, \"expected\": 1}]}")
              .find("t2") != std::string::npos);
    CHECK_FALSE(err("{\"task_id\": \"t3\", \"prompt\": \"p\", \"entry_point\": \"f\"}").empty());
  }
  SUBCASE("json round trip") {
    const auto tasks = load_tasks(kData / "tasks16.jsonl");
    std::stringstream ss;
    for (const auto& t : tasks) ss << task_to_json(t).dump() << '\n';
    const auto again = read_tasks(ss, "copy");
    REQUIRE(again.size() == tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i)
      CHECK(task_to_json(again[i]) == task_to_json(tasks[i]));
  }
}

TEST_CASE("candidate verdicts") {
  const auto tasks = load_tasks(kData / "task_add.jsonl");
  const GenTask& add = tasks.at(0);
  CHECK(run_candidate(add, "fn add(a, b) { return a + b }").passed);
  const auto wrong = run_candidate(add, "fn add(a, b) { return a - b }");
  CHECK_FALSE(wrong.passed);
  CHECK(wrong.tests.size() == 5);
  const auto loop = run_candidate(add, "fn add(a, b) { while true {} }", 1000);
  CHECK_FALSE(loop.passed);
  CHECK(loop.tests[0].status == minilang::ExecStatus::step_budget_exceeded);
  const auto bad = run_candidate(add, "fn add(a, b) { return a + }");
  CHECK_FALSE(bad.passed);
  for (const auto& t : bad.tests) CHECK(t.status == minilang::ExecStatus::parse_error);
  CHECK_FALSE(run_candidate(add, "fn plus(a, b) { return a + b }").passed);
}

TEST_CASE("file digest") {
  const auto dir = std::filesystem::temp_directory_path() / "peftbench_test_digest";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "empty");
    std::ofstream(dir / "a") << "a";
  }
  // FNV-1a 64 reference values.
  CHECK(file_digest(dir / "empty") == "cbf29ce484222325");
  CHECK(file_digest(dir / "a") == "af63dc4c8601ec8c");
  CHECK_THROWS_AS(file_digest(dir / "missing"), DataError);
  std::filesystem::remove_all(dir);
}
