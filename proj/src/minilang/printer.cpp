// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "peftbench/minilang.hpp"

namespace peftbench::minilang {

namespace {

int precedence(const Node& n) {
  if (n.kind != NodeKind::BinOp) return 10;
  const std::string& op = n.name;
  if (op == "||") return 1;
  if (op == "&&") return 2;
  if (op == "+" || op == "-") return 4;
  if (op == "*" || op == "/" || op == "%") return 5;
  return 3;  // comparisons
}

std::string escape(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\t') {
      out += "\\t";
    } else {
      out += c;
    }
  }
  return out + "\"";
}

std::string expr_text(const Node& n);

std::string operand(const Node& child, int parent_prec, bool right) {
  const int p = precedence(child);
  const bool wrap = p < parent_prec || (right && p == parent_prec);
  const std::string s = expr_text(child);
  return wrap ? "(" + s + ")" : s;
}

std::string joined(const Node& n, std::size_t from = 0) {
  std::string s;
  for (std::size_t i = from; i < n.children.size(); ++i) {
    if (i > from) s += ", ";
    s += expr_text(*n.children[i]);
  }
  return s;
}

std::string expr_text(const Node& n) {
  switch (n.kind) {
    case NodeKind::Literal:
      return n.literal == LiteralType::String ? escape(n.name) : n.name;
    case NodeKind::Var:
      return n.name;
    case NodeKind::Call:
      return n.name + "(" + joined(n) + ")";
    case NodeKind::List:
      return "[" + joined(n) + "]";
    case NodeKind::Index:
      return operand(n.child(0), 10, false) + "[" + expr_text(n.child(1)) + "]";
    case NodeKind::UnOp:
      return n.name + operand(n.child(0), 10, false);
    case NodeKind::BinOp: {
      const int p = precedence(n);
      return operand(n.child(0), p, false) + " " + n.name + " " + operand(n.child(1), p, true);
    }
    default:
      return "?";
  }
}

void block_text(const Node& block, int depth, std::ostringstream& os);

void stmt_text(const Node& n, int depth, std::ostringstream& os) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  switch (n.kind) {
    case NodeKind::Let:
      os << pad << "let " << n.name << " = " << expr_text(n.child(0)) << "\n";
      break;
    case NodeKind::Assign:
      os << pad << n.name << " = " << expr_text(n.child(0)) << "\n";
      break;
    case NodeKind::Return:
      os << pad << "return " << expr_text(n.child(0)) << "\n";
      break;
    case NodeKind::ExprStmt:
      os << pad << expr_text(n.child(0)) << "\n";
      break;
    case NodeKind::While:
      os << pad << "while " << expr_text(n.child(0)) << " {\n";
      block_text(n.child(1), depth + 1, os);
      os << pad << "}\n";
      break;
    case NodeKind::If: {
      const Node* cur = &n;
      os << pad << "if " << expr_text(cur->child(0)) << " {\n";
      for (;;) {
        block_text(cur->child(1), depth + 1, os);
        if (cur->children.size() < 3) {
          os << pad << "}\n";
          break;
        }
        const Node& alt = cur->child(2);
        if (alt.kind == NodeKind::If) {
          os << pad << "} else if " << expr_text(alt.child(0)) << " {\n";
          cur = &alt;
          continue;
        }
        os << pad << "} else {\n";
        block_text(alt, depth + 1, os);
        os << pad << "}\n";
        break;
      }
      break;
    }
    default:
      os << pad << "?\n";
  }
}

void block_text(const Node& block, int depth, std::ostringstream& os) {
  for (const auto& s : block.children) stmt_text(*s, depth, os);
}

void sexpr(const Node& n, std::ostringstream& os) {
  os << "(" << to_string(n.kind);
  if (!n.name.empty()) {
    os << " " << (n.kind == NodeKind::Literal && n.literal == LiteralType::String ? escape(n.name)
                                                                                  : n.name);
  }
  if (n.kind == NodeKind::FnDef) {
    os << " (";
    for (std::size_t i = 0; i < n.params.size(); ++i) os << (i ? " " : "") << n.params[i];
    os << ")";
  }
  for (const auto& c : n.children) {
    os << " ";
    sexpr(*c, os);
  }
  os << ")";
}

}  // namespace

std::string pretty_print(const Program& program) {
  std::ostringstream os;
  bool first = true;
  for (const auto& fn : program.root().children) {
    if (!first) os << "\n";
    first = false;
    os << "fn " << fn->name << "(";
    for (std::size_t i = 0; i < fn->params.size(); ++i) os << (i ? ", " : "") << fn->params[i];
    os << ") {\n";
    block_text(fn->child(0), 1, os);
    os << "}\n";
  }
  return os.str();
}

std::string to_sexpr(const Program& program) {
  std::ostringstream os;
  sexpr(program.root(), os);
  return os.str();
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.name != b.name || a.params != b.params ||
      a.children.size() != b.children.size()) {
    return false;
  }
  if (a.kind == NodeKind::Literal && a.literal != b.literal) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!structurally_equal(*a.children[i], *b.children[i])) return false;
  }
  return true;
}

}  // namespace peftbench::minilang
