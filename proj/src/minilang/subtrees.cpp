// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "peftbench/minilang.hpp"

namespace peftbench::minilang {

namespace {

std::string label(const Node& n) {
  std::string s(to_string(n.kind));
  switch (n.kind) {
    case NodeKind::BinOp:
    case NodeKind::UnOp:
      s += ":" + n.name;
      break;
    case NodeKind::Literal:
      s += n.literal == LiteralType::Int     ? ":int"
           : n.literal == LiteralType::Float ? ":float"
           : n.literal == LiteralType::String ? ":string"
                                              : ":bool";
      break;
    case NodeKind::FnDef:
      s += "/" + std::to_string(n.params.size());
      break;
    default:
      break;
  }
  return s;
}

// Returns the fingerprint of n and records one entry per internal node.
std::string fingerprint(const Node& n, std::multiset<std::string>& out) {
  std::string s = "(" + label(n);
  for (const auto& c : n.children) s += " " + fingerprint(*c, out);
  s += ")";
  if (!n.children.empty()) out.insert(s);
  return s;
}

}  // namespace

std::multiset<std::string> subtrees(const Program& program) {
  std::multiset<std::string> out;
  fingerprint(program.root(), out);
  return out;
}

std::size_t internal_node_count(const Program& program) {
  std::size_t n = 0;
  for (const Node* node : program.nodes()) n += node->children.empty() ? 0 : 1;
  return n;
}

}  // namespace peftbench::minilang
