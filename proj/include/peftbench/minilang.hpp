// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

// A tiny deterministic imperative language: lexer, recursive-descent parser,
// subtree fingerprints, def-use dataflow and a step-budgeted interpreter.
//
//   program := fn-def*
//   fn-def  := "fn" name "(" params ")" block
//   block   := "{" stmt* "}"
//   stmt    := "let" name "=" expr | name "=" expr
//            | "if" expr block ["else" (block | if-stmt)]
//            | "while" expr block | "return" expr | call
//   expr    := precedence climbing, loosest first:
//              ||   &&   == != < <= > >=   + -   * / %   unary - !
//              then postfix call f(...) / index x[i] and atoms
//              (literals, names, "(" expr ")", list "[" a, b "]").
// Statements may be separated by optional ';'. Comments run from '#' to end
// of line. Variables are function-scoped.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "peftbench/error.hpp"

namespace peftbench::minilang {

struct Position {
  int line = 1;
  int col = 1;
};

enum class TokenKind {
  keyword,
  identifier,
  int_literal,
  float_literal,
  string_literal,
  bool_literal,
  op,
  punct,
};

std::string_view to_string(TokenKind k);

struct Token {
  TokenKind kind;
  std::string lexeme;
  Position pos;

  friend bool operator==(const Token&, const Token&) = default;
};

/// fn let if else while return true false
bool is_keyword(std::string_view word);

/// Lexing or parsing failure with the offending position.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, Position pos);
  Position position() const { return pos_; }

 private:
  Position pos_;
};

/// Longest-match lexer. Throws ParseError on an illegal character, an
/// unterminated string or an out-of-range integer literal.
std::vector<Token> tokenize(std::string_view source);

// ---------------------------------------------------------------------------
// AST

enum class NodeKind {
  Program,
  FnDef,
  Block,
  Let,
  Assign,
  If,
  While,
  Return,
  ExprStmt,
  Call,
  BinOp,
  UnOp,
  Index,
  List,
  Literal,
  Var,
};

std::string_view to_string(NodeKind k);

enum class LiteralType { Int, Float, String, Bool };

/// Node layout by kind:
///   Program  children = FnDef*
///   FnDef    name, params, children = {Block}
///   Block    children = statements
///   Let/Assign name, children = {value}
///   If       children = {cond, then Block[, else Block or If]}
///   While    children = {cond, body Block}
///   Return   children = {value}
///   ExprStmt children = {Call}
///   Call     name = callee, children = args
///   BinOp/UnOp name = operator, children = operands
///   Index    children = {target, index}
///   List     children = elements
///   Literal  name = decoded literal text, literal = type
///   Var      name
struct Node {
  NodeKind kind;
  std::string name;
  std::vector<std::string> params;
  LiteralType literal = LiteralType::Int;
  std::vector<std::unique_ptr<Node>> children;
  Position pos;
  int id = -1;  // preorder index, assigned by parse()

  const Node& child(std::size_t i) const { return *children.at(i); }
};

/// A parsed program. Node ids are preorder indices; nodes() lists them.
class Program {
 public:
  explicit Program(std::unique_ptr<Node> root);

  const Node& root() const { return *root_; }
  const std::vector<const Node*>& nodes() const { return nodes_; }
  const Node* find_function(std::string_view name) const;

 private:
  std::unique_ptr<Node> root_;
  std::vector<const Node*> nodes_;
};

/// Throws ParseError with position and the expected token set. Duplicate
/// function names are rejected.
Program parse(const std::vector<Token>& tokens);
Program parse_source(std::string_view source);

/// Canonical source text; parse(pretty_print(p)) is structurally identical to p.
std::string pretty_print(const Program& program);
/// Debug S-expression rendering, e.g. (Program (FnDef f (Block (Return (Literal 1))))).
std::string to_sexpr(const Program& program);
/// True when both trees have the same kinds, names, literals and shape.
bool structurally_equal(const Node& a, const Node& b);

// ---------------------------------------------------------------------------
// CodeBLEU structure signals

/// One fingerprint per internal node (node with at least one child): the
/// S-expression of node kinds in the subtree rooted there, with identifier
/// names and literal values erased. Operators and literal types are kept.
std::multiset<std::string> subtrees(const Program& program);

std::size_t internal_node_count(const Program& program);

struct DataflowEdge {
  static constexpr int kUnknownDef = -1;

  int def_site;         // node id of the defining Let/Assign/FnDef, or kUnknownDef
  int use_site;         // node id of the Var read
  int slot;             // variable number by first definition order
  NodeKind def_kind;    // kind of the def site (FnDef for parameters)
  NodeKind use_kind;    // kind of the node consuming the Var
  bool unknown_def = false;

  auto operator<=>(const DataflowEdge&) const = default;
};

struct DataflowGraph {
  std::vector<DataflowEdge> edges;  // sorted, unique
};

/// Def-use edges by reaching definitions. Branch merges keep both arms' defs;
/// loops iterate to a fixpoint so back-edges are included. Slots number the
/// variables of each function by first definition (parameters first), counting
/// on across functions in program order.
DataflowGraph dataflow(const Program& program);

// ---------------------------------------------------------------------------
// Interpreter

struct Value;
using List = std::vector<Value>;
using ListPtr = std::shared_ptr<const List>;

struct Value {
  std::variant<std::monostate, std::int64_t, double, bool, std::string, ListPtr> v;

  Value() = default;
  Value(std::int64_t i) : v(i) {}
  Value(int i) : v(std::int64_t{i}) {}
  Value(double d) : v(d) {}
  Value(bool b) : v(b) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(const char* s) : v(std::string(s)) {}
  Value(List items) : v(std::make_shared<const List>(std::move(items))) {}

  bool is_unit() const { return std::holds_alternative<std::monostate>(v); }
};

/// Language equality: numbers compare by value across int/float, lists
/// element-wise, mismatched kinds are unequal.
bool values_equal(const Value& a, const Value& b);
/// Test-verdict equality: as values_equal, but floats match within 1e-9 relative.
bool values_match(const Value& actual, const Value& expected);
std::string to_display(const Value& v);

Value value_from_json(const nlohmann::json& j);
nlohmann::json value_to_json(const Value& v);

enum class ExecStatus { value, runtime_error, step_budget_exceeded, parse_error };

std::string_view to_string(ExecStatus s);

struct ExecOutcome {
  ExecStatus status = ExecStatus::value;
  Value value;
  std::string message;
  std::uint64_t steps_used = 0;
  std::string output;  // text written by print()
};

inline constexpr std::uint64_t kDefaultStepBudget = 100000;
inline constexpr std::size_t kMaxCallDepth = 256;

/// Tree-walking evaluation. Each evaluated node costs one step. Integer
/// overflow, division by zero, type errors, unknown names and call depth
/// above kMaxCallDepth are runtime errors. No clock, randomness or I/O.
ExecOutcome execute(const Program& program, std::string_view entry_point,
                    const std::vector<Value>& args,
                    std::uint64_t step_budget = kDefaultStepBudget);

/// Parses then executes; parse failures come back as ExecStatus::parse_error.
ExecOutcome run_source(std::string_view source, std::string_view entry_point,
                       const std::vector<Value>& args,
                       std::uint64_t step_budget = kDefaultStepBudget);

}  // namespace peftbench::minilang
