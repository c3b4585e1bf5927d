// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <map>
#include <set>

#include "peftbench/minilang.hpp"

namespace peftbench::minilang {

namespace {

struct Def {
  int site;
  NodeKind kind;
  auto operator<=>(const Def&) const = default;
};

using Reaching = std::map<std::string, std::set<Def>>;

class Analyzer {
 public:
  std::set<DataflowEdge> edges;

  void function(const Node& fn) {
    slots_.clear();
    Reaching state;
    for (const auto& p : fn.params) {
      slot_of(p);
      state[p] = {Def{fn.id, NodeKind::FnDef}};
    }
    block(fn.child(0), state);
  }

 private:
  std::map<std::string, int> slots_;
  int next_slot_ = 0;

  int slot_of(const std::string& name) {
    auto [it, inserted] = slots_.try_emplace(name, next_slot_);
    if (inserted) ++next_slot_;
    return it->second;
  }

  static void merge_into(Reaching& dst, const Reaching& src) {
    for (const auto& [name, defs] : src) dst[name].insert(defs.begin(), defs.end());
  }

  void expr(const Node& n, NodeKind parent, const Reaching& state) {
    if (n.kind == NodeKind::Var) {
      const int slot = slot_of(n.name);
      auto it = state.find(n.name);
      if (it == state.end() || it->second.empty()) {
        edges.insert({DataflowEdge::kUnknownDef, n.id, slot, NodeKind::Program, parent, true});
      } else {
        for (const Def& d : it->second) edges.insert({d.site, n.id, slot, d.kind, parent, false});
      }
      return;
    }
    for (const auto& c : n.children) expr(*c, n.kind, state);
  }

  void block(const Node& b, Reaching& state) {
    for (const auto& s : b.children) statement(*s, state);
  }

  void statement(const Node& s, Reaching& state) {
    switch (s.kind) {
      case NodeKind::Let:
      case NodeKind::Assign:
        expr(s.child(0), s.kind, state);
        slot_of(s.name);
        state[s.name] = {Def{s.id, s.kind}};
        break;
      case NodeKind::Return:
      case NodeKind::ExprStmt:
        expr(s.child(0), s.kind, state);
        break;
      case NodeKind::If: {
        expr(s.child(0), NodeKind::If, state);
        Reaching then_state = state;
        block(s.child(1), then_state);
        Reaching else_state = state;
        if (s.children.size() > 2) {
          const Node& alt = s.child(2);
          if (alt.kind == NodeKind::If) {
            statement(alt, else_state);
          } else {
            block(alt, else_state);
          }
        }
        state = std::move(then_state);
        merge_into(state, else_state);
        break;
      }
      case NodeKind::While: {
        // Iterate to a fixpoint so defs from the body reach the condition and
        // the start of the body again.
        for (;;) {
          const Reaching before = state;
          expr(s.child(0), NodeKind::While, state);
          Reaching body = state;
          block(s.child(1), body);
          merge_into(state, body);
          if (state == before) break;
        }
        break;
      }
      default:
        break;
    }
  }
};

}  // namespace

DataflowGraph dataflow(const Program& program) {
  Analyzer a;
  for (const auto& fn : program.root().children) a.function(*fn);
  return {std::vector<DataflowEdge>(a.edges.begin(), a.edges.end())};
}

}  // namespace peftbench::minilang
