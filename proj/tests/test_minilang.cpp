// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <limits>
#include <sstream>

#include "peftbench/minilang.hpp"
#include "peftbench/rng.hpp"

using namespace peftbench::minilang;
using peftbench::SeededRng;

namespace {

std::vector<std::pair<TokenKind, std::string>> kinds(std::string_view src) {
  std::vector<std::pair<TokenKind, std::string>> out;
  for (const Token& t : tokenize(src)) out.emplace_back(t.kind, t.lexeme);
  return out;
}

const Node& first_return_value(const Program& p) {
  return p.root().child(0).child(0).child(0).child(0);
}

// Random program generator for the round-trip property.
class ProgramGen {
 public:
  explicit ProgramGen(std::uint64_t seed) : rng_(seed) {}

  std::string program() {
    std::ostringstream os;
    const std::size_t fns = 1 + rng_.below(3);
    for (std::size_t f = 0; f < fns; ++f) {
      vars_ = {"a", "b"};
      os << "fn f" << f << "(a, b) {\n";
      block_body(os, 0);
      os << "}\n";
    }
    return os.str();
  }

 private:
  std::string expr(int depth) {
    const std::size_t pick = depth > 3 ? rng_.below(4) : rng_.below(10);
    switch (pick) {
      case 0: return std::to_string(rng_.below(1000));
      case 1: return vars_[rng_.below(vars_.size())];
      case 2: return rng_.below(2) ? "true" : "false";
      case 3: return "\"s" + std::to_string(rng_.below(50)) + "\"";
      case 4: {
        static const char* ops[] = {"+", "-", "*", "/", "%", "==", "!=", "<",
                                    "<=", ">", ">=", "&&", "||"};
        return expr(depth + 1) + " " + ops[rng_.below(13)] + " " + expr(depth + 1);
      }
      case 5: return (rng_.below(2) ? "-" : "!") + std::string("(") + expr(depth + 1) + ")";
      case 6: return "(" + expr(depth + 1) + ")";
      case 7: return "len(" + expr(depth + 1) + ")";
      case 8: return "[" + expr(depth + 1) + ", " + expr(depth + 1) + "]";
      default: return vars_[rng_.below(vars_.size())] + "[" + expr(depth + 1) + "]";
    }
  }

  void block_body(std::ostringstream& os, int depth) {
    const std::size_t stmts = 1 + rng_.below(4);
    for (std::size_t s = 0; s < stmts; ++s) {
      const std::size_t pick = depth > 2 ? rng_.below(3) : rng_.below(6);
      switch (pick) {
        case 0: {
          const std::string v = "v" + std::to_string(vars_.size());
          os << "let " << v << " = " << expr(0) << "\n";
          vars_.push_back(v);
          break;
        }
        case 1: os << vars_[rng_.below(vars_.size())] << " = " << expr(0) << "\n"; break;
        case 2: os << "print(" << expr(0) << ")\n"; break;
        case 3:
          os << "if " << expr(0) << " {\n";
          block_body(os, depth + 1);
          os << "}";
          if (rng_.below(2)) {
            os << " else {\n";
            block_body(os, depth + 1);
            os << "}";
          }
          os << "\n";
          break;
        case 4:
          os << "while " << expr(0) << " {\n";
          block_body(os, depth + 1);
          os << "}\n";
          break;
        default: os << "return " << expr(0) << "\n"; break;
      }
    }
  }

  SeededRng rng_;
  std::vector<std::string> vars_;
};

std::int64_t fib_iterative(int n) {
  std::int64_t a = 0;
  std::int64_t b = 1;
  for (int i = 0; i < n; ++i) {
    const std::int64_t t = a + b;
    a = b;
    b = t;
  }
  return a;
}

const char* kFib =
    "fn fib(n) {\n"
    "  if n < 2 { return n }\n"
    "  return fib(n - 1) + fib(n - 2)\n"
    "}\n";

}  // namespace

TEST_CASE("lexer") {
  SUBCASE("let statement") {
    const auto t = kinds("let x = 1");
    REQUIRE(t.size() == 4);
    CHECK(t[0] == std::pair{TokenKind::keyword, std::string("let")});
    CHECK(t[1] == std::pair{TokenKind::identifier, std::string("x")});
    CHECK(t[2] == std::pair{TokenKind::op, std::string("=")});
    CHECK(t[3] == std::pair{TokenKind::int_literal, std::string("1")});
  }
  SUBCASE("longest match") {
    const auto t = kinds("xy12 <= == != && || letter");
    REQUIRE(t.size() == 7);
    CHECK(t[0].first == TokenKind::identifier);
    CHECK(t[0].second == "xy12");
    CHECK(t[1].second == "<=");
    CHECK(t[2].second == "==");
    CHECK(t[3].second == "!=");
    CHECK(t[4].second == "&&");
    CHECK(t[5].second == "||");
    CHECK(t[6] == std::pair{TokenKind::identifier, std::string("letter")});
  }
  SUBCASE("float literal") {
    const auto t = kinds("1.5e3");
    REQUIRE(t.size() == 1);
    CHECK(t[0].first == TokenKind::float_literal);
    const auto out = run_source("fn f() { return 1.5e3 }", "f", {});
    REQUIRE(out.status == ExecStatus::value);
    CHECK(std::get<double>(out.value.v) == 1500.0);
  }
  SUBCASE("bools strings and comments") {
    const auto t = kinds("true \"a b\" # comment\nfalse");
    REQUIRE(t.size() == 3);
    CHECK(t[0].first == TokenKind::bool_literal);
    CHECK(t[1].first == TokenKind::string_literal);
    CHECK(t[2].first == TokenKind::bool_literal);
  }
  SUBCASE("positions") {
    const auto t = tokenize("fn\n  f");
    CHECK(t[1].pos.line == 2);
    CHECK(t[1].pos.col == 3);
  }
  SUBCASE("illegal character names its position") {
    try {
      tokenize("let x = 1\nlet y = @");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.position().line == 2);
      CHECK(e.position().col == 9);
    }
    CHECK_THROWS_AS(tokenize("\"open"), ParseError);
    CHECK_THROWS_AS(tokenize("99999999999999999999"), ParseError);
  }
  SUBCASE("keyword set") {
    for (const char* k : {"fn", "let", "if", "else", "while", "return", "true", "false"})
      CHECK(is_keyword(k));
    CHECK_FALSE(is_keyword("print"));
    CHECK_FALSE(is_keyword("len"));
  }
}

TEST_CASE("parser") {
  SUBCASE("precedence") {
    const Program p = parse_source("fn f(){return 1+2*3}");
    const Node& e = first_return_value(p);
    CHECK(e.kind == NodeKind::BinOp);
    CHECK(e.name == "+");
    CHECK(e.child(0).kind == NodeKind::Literal);
    CHECK(e.child(1).kind == NodeKind::BinOp);
    CHECK(e.child(1).name == "*");
  }
  SUBCASE("left associativity") {
    const Program p = parse_source("fn f(){return 1+2+3}");
    const Node& e = first_return_value(p);
    CHECK(e.name == "+");
    CHECK(e.child(0).kind == NodeKind::BinOp);
    CHECK(e.child(0).child(0).name == "1");
    CHECK(e.child(1).name == "3");
  }
  SUBCASE("full precedence ladder") {
    const Program p = parse_source("fn f(){return a || b && c == d + e * -g}");
    CHECK(to_sexpr(p) ==
          "(Program (FnDef f () (Block (Return (BinOp || (Var a) (BinOp && (Var b) "
          "(BinOp == (Var c) (BinOp + (Var d) (BinOp * (Var e) (UnOp - (Var g)))))))))))");
  }
  SUBCASE("syntax errors name the position and expected set") {
    try {
      parse_source("fn f() {\n  return 1 +\n}");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(e.position().line == 3);
      CHECK(msg.find("expected") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_source("fn f() { let = 1 }"), ParseError);
    CHECK_THROWS_AS(parse_source("fn f() {} fn f() {}"), ParseError);
    CHECK_THROWS_AS(parse_source("let x = 1"), ParseError);
  }
  SUBCASE("every non-program node has one parent and ids are preorder") {
    const Program p = parse_source(kFib);
    const auto& nodes = p.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(nodes[i]->id == static_cast<int>(i));
    std::vector<int> parents(nodes.size(), 0);
    for (const Node* n : nodes)
      for (const auto& c : n->children) ++parents[static_cast<std::size_t>(c->id)];
    CHECK(parents[0] == 0);
    for (std::size_t i = 1; i < parents.size(); ++i) CHECK(parents[i] == 1);
  }
  SUBCASE("empty program") {
    CHECK(parse_source("").root().children.empty());
  }
}

TEST_CASE("pretty print round trip on generated programs") {
  ProgramGen gen(2026);
  for (int i = 0; i < 100; ++i) {
    const std::string src = gen.program();
    CAPTURE(src);
    const Program p = parse_source(src);
    const std::string printed = pretty_print(p);
    const Program q = parse_source(printed);
    CHECK(structurally_equal(p.root(), q.root()));
    CHECK(pretty_print(q) == printed);
    CHECK(subtrees(p) == subtrees(q));
  }
}

TEST_CASE("subtrees") {
  SUBCASE("identical programs") {
    CHECK(subtrees(parse_source(kFib)) == subtrees(parse_source(kFib)));
  }
  SUBCASE("renaming a variable keeps the multiset") {
    const auto a = subtrees(parse_source("fn f(x){let y = x + 1\nreturn y}"));
    const auto b = subtrees(parse_source("fn g(q){let z = q + 1\nreturn z}"));
    CHECK(a == b);
  }
  SUBCASE("size equals the internal node count") {
    ProgramGen gen(7);
    for (int i = 0; i < 20; ++i) {
      const Program p = parse_source(gen.program());
      std::size_t internal = 0;
      for (const Node* n : p.nodes())
        if (!n->children.empty()) ++internal;
      CHECK(subtrees(p).size() == internal);
      CHECK(internal_node_count(p) == internal);
    }
  }
  SUBCASE("changing an operator changes exactly the subtrees containing it") {
    const Program plus = parse_source("fn f(){return 1+2}");
    const Program times = parse_source("fn f(){return 1*2}");
    const auto a = subtrees(plus);
    const auto b = subtrees(times);
    std::vector<std::string> only_a;
    std::vector<std::string> only_b;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
    // Internal nodes: Program, FnDef, Block, Return, BinOp. Every one of them
    // has the BinOp in its subtree, so all five fingerprints differ.
    CHECK(only_a.size() == 5);
    CHECK(only_b.size() == 5);
    const auto binop_rooted = [](const std::string& s) { return s.rfind("(BinOp", 0) == 0; };
    CHECK(std::count_if(only_a.begin(), only_a.end(), binop_rooted) == 1);
    CHECK(std::count_if(only_b.begin(), only_b.end(), binop_rooted) == 1);
    // Nodes outside the changed path keep their fingerprints.
    const auto c = subtrees(parse_source("fn f(){let x = 3 * 4\nreturn 1+2}"));
    const auto d = subtrees(parse_source("fn f(){let x = 3 * 4\nreturn 1*2}"));
    std::vector<std::string> common;
    std::set_intersection(c.begin(), c.end(), d.begin(), d.end(), std::back_inserter(common));
    CHECK(common.size() == 2);  // the Let and its BinOp
  }
}

TEST_CASE("dataflow") {
  SUBCASE("single def and use") {
    const Program p = parse_source("fn f(){let a=1 return a}");
    const auto g = dataflow(p);
    REQUIRE(g.edges.size() == 1);
    CHECK(p.nodes()[static_cast<std::size_t>(g.edges[0].def_site)]->kind == NodeKind::Let);
    CHECK(g.edges[0].slot == 0);
    CHECK(g.edges[0].use_kind == NodeKind::Return);
  }
  SUBCASE("redefinition kills the earlier def") {
    const Program p = parse_source("fn f(){let a=1 let a=2 return a}");
    const auto g = dataflow(p);
    REQUIRE(g.edges.size() == 1);
    const Node& def = *p.nodes()[static_cast<std::size_t>(g.edges[0].def_site)];
    CHECK(def.child(0).name == "2");
  }
  SUBCASE("both branch definitions reach the join") {
    const Program p = parse_source(
        "fn f(x) {\n"
        "  let b = 0\n"
        "  if x > 1 { b = 2 }\n"
        "  else { b = 3 }\n"
        "  return b\n"
        "}\n");
    const auto g = dataflow(p);
    // x -> condition, then the two assignments of b -> return.
    REQUIRE(g.edges.size() == 3);
    int to_return = 0;
    for (const auto& e : g.edges) {
      if (e.use_kind != NodeKind::Return) continue;
      ++to_return;
      CHECK(p.nodes()[static_cast<std::size_t>(e.def_site)]->kind == NodeKind::Assign);
      CHECK(e.slot == 1);
    }
    CHECK(to_return == 2);
  }
  SUBCASE("one-armed if keeps the earlier def") {
    const auto g = dataflow(parse_source("fn f(x){let b = 0\nif x { b = 1 }\nreturn b}"));
    CHECK(g.edges.size() == 3);
  }
  SUBCASE("loops include back edges") {
    const Program p = parse_source(
        "fn f(n) {\n"
        "  let i = 0\n"
        "  while i < n { i = i + 1 }\n"
        "  return i\n"
        "}\n");
    const auto g = dataflow(p);
    // The assignment inside the loop reaches the condition and its own right-hand side.
    int from_assign = 0;
    for (const auto& e : g.edges)
      if (p.nodes()[static_cast<std::size_t>(e.def_site)]->kind == NodeKind::Assign) ++from_assign;
    CHECK(from_assign == 3);  // condition, body read, return
  }
  SUBCASE("undefined names point to the unknown def") {
    const auto g = dataflow(parse_source("fn f(){return z}"));
    REQUIRE(g.edges.size() == 1);
    CHECK(g.edges[0].unknown_def);
    CHECK(g.edges[0].def_site == DataflowEdge::kUnknownDef);
  }
  SUBCASE("renaming leaves slots unchanged") {
    const auto a = dataflow(parse_source("fn f(x){let y = x\nreturn y}"));
    const auto b = dataflow(parse_source("fn f(p){let q = p\nreturn q}"));
    CHECK(a.edges == b.edges);
  }
}

TEST_CASE("interpreter") {
  SUBCASE("add") {
    const auto out = run_source("fn add(a,b){return a+b}", "add", {2, 3});
    REQUIRE(out.status == ExecStatus::value);
    CHECK(values_equal(out.value, Value(5)));
  }
  SUBCASE("recursive fib matches the iterative oracle") {
    for (int n : {0, 1, 2, 5, 10, 15}) {
      const auto out = run_source(kFib, "fib", {n});
      REQUIRE(out.status == ExecStatus::value);
      CHECK(std::get<std::int64_t>(out.value.v) == fib_iterative(n));
    }
    CHECK(std::get<std::int64_t>(run_source(kFib, "fib", {10}).value.v) == 55);
  }
  SUBCASE("infinite loop exhausts the budget quickly") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = run_source("fn f(){while true {}}", "f", {}, 10000);
    const auto t1 = std::chrono::steady_clock::now();
    CHECK(out.status == ExecStatus::step_budget_exceeded);
    CHECK(out.steps_used <= 10000);
    CHECK(std::chrono::duration<double>(t1 - t0).count() < 1.0);
  }
  SUBCASE("unbounded recursion is a runtime error") {
    const auto out = run_source("fn f(n){return f(n+1)}", "f", {0});
    CHECK(out.status == ExecStatus::runtime_error);
  }
  SUBCASE("runtime errors") {
    const auto err = [](const char* src, std::vector<Value> args = {}) {
      return run_source(src, "f", args).status;
    };
    CHECK(err("fn f(){return 1/0}") == ExecStatus::runtime_error);
    CHECK(err("fn f(){return 1%0}") == ExecStatus::runtime_error);
    CHECK(err("fn f(x){return x*x}", {std::numeric_limits<std::int64_t>::max()}) ==
          ExecStatus::runtime_error);
    CHECK(err("fn f(x){return x+1}", {std::numeric_limits<std::int64_t>::max()}) ==
          ExecStatus::runtime_error);
    CHECK(err("fn f(x){return x/-1}", {std::numeric_limits<std::int64_t>::min()}) ==
          ExecStatus::runtime_error);
    CHECK(err("fn f(){return 1 + true}") == ExecStatus::runtime_error);
    CHECK(err("fn f(){return y}") == ExecStatus::runtime_error);
    CHECK(err("fn f(){return [1][3]}") == ExecStatus::runtime_error);
    CHECK(err("fn f(){if 1 { return 1 }}") == ExecStatus::runtime_error);
    CHECK(err("fn f(a){return a}") == ExecStatus::runtime_error);
    CHECK(run_source("fn g(){return 1}", "f", {}).status == ExecStatus::runtime_error);
    CHECK(err("fn f( {") == ExecStatus::parse_error);
  }
  SUBCASE("values and builtins") {
    const auto out = run_source(
        "fn f(xs) {\n"
        "  let s = 0\n"
        "  let i = 0\n"
        "  while i < len(xs) { s = s + xs[i]\n i = i + 1 }\n"
        "  print(s)\n"
        "  return [s, \"n\" + \"m\", 7 / 2, 7.0 / 2, !false]\n"
        "}\n",
        "f", std::vector<Value>{Value(List{1, 2, 3})});
    REQUIRE(out.status == ExecStatus::value);
    CHECK(values_equal(out.value, Value(List{6, "nm", 3, 3.5, true})));
    CHECK(out.output == "6\n");
  }
  SUBCASE("short circuit") {
    CHECK(run_source("fn f(){return false && 1/0 == 1}", "f", {}).status == ExecStatus::value);
    CHECK(run_source("fn f(){return true || 1/0 == 1}", "f", {}).status == ExecStatus::value);
  }
  SUBCASE("deterministic including steps") {
    const auto a = run_source(kFib, "fib", {12});
    const auto b = run_source(kFib, "fib", {12});
    CHECK(a.steps_used == b.steps_used);
    CHECK(a.steps_used > 0);
  }
  SUBCASE("value matching") {
    CHECK(values_equal(Value(2), Value(2.0)));
    CHECK_FALSE(values_equal(Value(2), Value("2")));
    CHECK(values_match(Value(0.1 + 0.2), Value(0.3)));
    CHECK_FALSE(values_match(Value(0.31), Value(0.3)));
    CHECK(value_to_json(value_from_json(nlohmann::json::parse("[1, 2.5, \"x\", true]"))) ==
          nlohmann::json::parse("[1, 2.5, \"x\", true]"));
  }
}
