// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <functional>
#include <initializer_list>
#include <set>

#include "peftbench/minilang.hpp"

namespace peftbench::minilang {

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Program: return "Program";
    case NodeKind::FnDef: return "FnDef";
    case NodeKind::Block: return "Block";
    case NodeKind::Let: return "Let";
    case NodeKind::Assign: return "Assign";
    case NodeKind::If: return "If";
    case NodeKind::While: return "While";
    case NodeKind::Return: return "Return";
    case NodeKind::ExprStmt: return "ExprStmt";
    case NodeKind::Call: return "Call";
    case NodeKind::BinOp: return "BinOp";
    case NodeKind::UnOp: return "UnOp";
    case NodeKind::Index: return "Index";
    case NodeKind::List: return "List";
    case NodeKind::Literal: return "Literal";
    case NodeKind::Var: return "Var";
  }
  return "?";
}

Program::Program(std::unique_ptr<Node> root) : root_(std::move(root)) {
  std::function<void(Node&)> number = [&](Node& n) {
    n.id = static_cast<int>(nodes_.size());
    nodes_.push_back(&n);
    for (auto& c : n.children) number(*c);
  };
  number(*root_);
}

const Node* Program::find_function(std::string_view name) const {
  for (const auto& fn : root_->children)
    if (fn->name == name) return fn.get();
  return nullptr;
}

namespace {

std::unique_ptr<Node> make(NodeKind kind, Position pos, std::string name = {}) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  n->pos = pos;
  n->name = std::move(name);
  return n;
}

class Parser {
 public:
  explicit Parser(const std::vector<Token>& tokens) : toks_(tokens) {}

  std::unique_ptr<Node> program() {
    auto root = make(NodeKind::Program, Position{});
    std::set<std::string> names;
    while (!at_end()) {
      auto fn = fn_def();
      if (!names.insert(fn->name).second) {
        throw ParseError("duplicate function '" + fn->name + "'", fn->pos);
      }
      root->children.push_back(std::move(fn));
    }
    return root;
  }

 private:
  const std::vector<Token>& toks_;
  std::size_t i_ = 0;

  bool at_end() const { return i_ >= toks_.size(); }
  const Token* peek(std::size_t ahead = 0) const {
    return i_ + ahead < toks_.size() ? &toks_[i_ + ahead] : nullptr;
  }
  Position here() const {
    if (!at_end()) return toks_[i_].pos;
    return toks_.empty() ? Position{} : toks_.back().pos;
  }
  bool is(std::string_view lexeme, std::size_t ahead = 0) const {
    const Token* t = peek(ahead);
    return t && t->lexeme == lexeme && t->kind != TokenKind::string_literal;
  }
  bool is_kind(TokenKind k) const { return !at_end() && toks_[i_].kind == k; }

  [[noreturn]] void fail(std::initializer_list<std::string_view> expected) const {
    std::string msg = "expected one of {";
    bool first = true;
    for (auto e : expected) {
      if (!first) msg += ", ";
      msg += e;
      first = false;
    }
    msg += "} but found ";
    msg += at_end() ? std::string("end of input") : "'" + toks_[i_].lexeme + "'";
    throw ParseError(msg, here());
  }

  void expect(std::string_view lexeme) {
    if (!is(lexeme)) fail({lexeme});
    ++i_;
  }

  std::string identifier() {
    if (!is_kind(TokenKind::identifier)) fail({"identifier"});
    return toks_[i_++].lexeme;
  }

  std::unique_ptr<Node> fn_def() {
    const Position pos = here();
    expect("fn");
    auto fn = make(NodeKind::FnDef, pos, identifier());
    expect("(");
    if (!is(")")) {
      fn->params.push_back(identifier());
      while (is(",")) {
        ++i_;
        fn->params.push_back(identifier());
      }
    }
    expect(")");
    fn->children.push_back(block());
    return fn;
  }

  std::unique_ptr<Node> block() {
    auto b = make(NodeKind::Block, here());
    expect("{");
    while (!is("}")) {
      if (at_end()) fail({"}"});
      b->children.push_back(statement());
      while (is(";")) ++i_;
    }
    expect("}");
    return b;
  }

  std::unique_ptr<Node> statement() {
    const Position pos = here();
    if (is("let")) {
      ++i_;
      auto n = make(NodeKind::Let, pos, identifier());
      expect("=");
      n->children.push_back(expr());
      return n;
    }
    if (is("if")) return if_stmt();
    if (is("while")) {
      ++i_;
      auto n = make(NodeKind::While, pos);
      n->children.push_back(expr());
      n->children.push_back(block());
      return n;
    }
    if (is("return")) {
      ++i_;
      auto n = make(NodeKind::Return, pos);
      n->children.push_back(expr());
      return n;
    }
    if (is_kind(TokenKind::identifier) && is("=", 1)) {
      auto n = make(NodeKind::Assign, pos, identifier());
      ++i_;
      n->children.push_back(expr());
      return n;
    }
    if (is_kind(TokenKind::identifier) && is("(", 1)) {
      auto e = expr();
      if (e->kind != NodeKind::Call) {
        throw ParseError("only calls may be used as statements", pos);
      }
      auto n = make(NodeKind::ExprStmt, pos);
      n->children.push_back(std::move(e));
      return n;
    }
    fail({"let", "if", "while", "return", "assignment", "call"});
  }

  std::unique_ptr<Node> if_stmt() {
    auto n = make(NodeKind::If, here());
    expect("if");
    n->children.push_back(expr());
    n->children.push_back(block());
    if (is("else")) {
      ++i_;
      if (is("if")) {
        n->children.push_back(if_stmt());
      } else {
        n->children.push_back(block());
      }
    }
    return n;
  }

  using Level = std::initializer_list<std::string_view>;

  std::unique_ptr<Node> binary(int level) {
    static const Level kLevels[] = {
        {"||"}, {"&&"}, {"==", "!=", "<", "<=", ">", ">="}, {"+", "-"}, {"*", "/", "%"}};
    if (level == 5) return unary();
    auto lhs = binary(level + 1);
    for (;;) {
      const Token* t = peek();
      if (!t || t->kind != TokenKind::op) break;
      bool match = false;
      for (auto op : kLevels[level]) match = match || t->lexeme == op;
      if (!match) break;
      auto n = make(NodeKind::BinOp, t->pos, t->lexeme);
      ++i_;
      n->children.push_back(std::move(lhs));
      n->children.push_back(binary(level + 1));
      lhs = std::move(n);
    }
    return lhs;
  }

  std::unique_ptr<Node> expr() { return binary(0); }

  std::unique_ptr<Node> unary() {
    const Token* t = peek();
    if (t && t->kind == TokenKind::op && (t->lexeme == "-" || t->lexeme == "!")) {
      auto n = make(NodeKind::UnOp, t->pos, t->lexeme);
      ++i_;
      n->children.push_back(unary());
      return n;
    }
    return postfix();
  }

  std::unique_ptr<Node> postfix() {
    auto base = atom();
    while (is("[")) {
      auto n = make(NodeKind::Index, here());
      ++i_;
      n->children.push_back(std::move(base));
      n->children.push_back(expr());
      expect("]");
      base = std::move(n);
    }
    return base;
  }

  std::unique_ptr<Node> atom() {
    if (at_end()) fail({"expression"});
    const Token& t = toks_[i_];
    switch (t.kind) {
      case TokenKind::int_literal:
      case TokenKind::float_literal:
      case TokenKind::string_literal:
      case TokenKind::bool_literal: {
        auto n = make(NodeKind::Literal, t.pos, t.lexeme);
        n->literal = t.kind == TokenKind::int_literal     ? LiteralType::Int
                     : t.kind == TokenKind::float_literal ? LiteralType::Float
                     : t.kind == TokenKind::string_literal ? LiteralType::String
                                                           : LiteralType::Bool;
        ++i_;
        return n;
      }
      case TokenKind::identifier: {
        ++i_;
        if (is("(")) {
          auto call = make(NodeKind::Call, t.pos, t.lexeme);
          ++i_;
          if (!is(")")) {
            call->children.push_back(expr());
            while (is(",")) {
              ++i_;
              call->children.push_back(expr());
            }
          }
          expect(")");
          return call;
        }
        return make(NodeKind::Var, t.pos, t.lexeme);
      }
      default:
        break;
    }
    if (is("(")) {
      ++i_;
      auto e = expr();
      expect(")");
      return e;
    }
    if (is("[")) {
      auto list = make(NodeKind::List, t.pos);
      ++i_;
      if (!is("]")) {
        list->children.push_back(expr());
        while (is(",")) {
          ++i_;
          list->children.push_back(expr());
        }
      }
      expect("]");
      return list;
    }
    fail({"literal", "identifier", "(", "["});
  }
};

}  // namespace

Program parse(const std::vector<Token>& tokens) {
  Parser p(tokens);
  return Program(p.program());
}

Program parse_source(std::string_view source) { return parse(tokenize(source)); }

}  // namespace peftbench::minilang
