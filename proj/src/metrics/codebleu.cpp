// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <optional>
#include <tuple>

#include "peftbench/metrics.hpp"
#include "peftbench/minilang.hpp"

namespace peftbench::metrics {

void CodeBleuWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0) {
    throw ConfigError("CodeBLEU weights must be non-negative");
  }
}

namespace {

std::optional<minilang::Program> try_parse(std::string_view source) {
  try {
    return minilang::parse_source(source);
  } catch (const minilang::ParseError&) {
    return std::nullopt;
  }
}

minilang::Program parse_reference(std::string_view source) {
  try {
    return minilang::parse_source(source);
  } catch (const minilang::ParseError& e) {
    throw DataError(std::string("reference program does not parse: ") + e.what());
  }
}

using EdgeKey = std::tuple<int, minilang::NodeKind, minilang::NodeKind, bool>;

std::multiset<EdgeKey> edge_keys(const minilang::Program& p) {
  std::multiset<EdgeKey> keys;
  for (const auto& e : minilang::dataflow(p).edges) {
    keys.insert({e.slot, e.def_kind, e.use_kind, e.unknown_def});
  }
  return keys;
}

template <typename T>
std::size_t multiset_overlap(const std::multiset<T>& a, const std::multiset<T>& b) {
  std::vector<T> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return common.size();
}

double ast_ratio(const std::optional<minilang::Program>& cand, const minilang::Program& ref) {
  const auto ref_trees = minilang::subtrees(ref);
  if (ref_trees.empty()) return 1.0;
  if (!cand) return 0.0;
  return static_cast<double>(multiset_overlap(minilang::subtrees(*cand), ref_trees)) /
         static_cast<double>(ref_trees.size());
}

double dataflow_ratio(const std::optional<minilang::Program>& cand, const minilang::Program& ref) {
  if (!cand) return 0.0;
  const auto ref_edges = edge_keys(ref);
  if (ref_edges.empty()) return 1.0;
  return static_cast<double>(multiset_overlap(edge_keys(*cand), ref_edges)) /
         static_cast<double>(ref_edges.size());
}

}  // namespace

double ast_match(std::string_view candidate, std::string_view reference) {
  return ast_ratio(try_parse(candidate), parse_reference(reference));
}

double dataflow_match(std::string_view candidate, std::string_view reference) {
  return dataflow_ratio(try_parse(candidate), parse_reference(reference));
}

CodeBleuScore codebleu(std::string_view candidate, std::string_view reference,
                       const CodeBleuWeights& weights, const BleuConfig& config) {
  weights.validate();
  const auto ref = parse_reference(reference);
  const auto cand = try_parse(candidate);
  const auto cand_toks = tokenize_code(candidate);
  const auto ref_toks = tokenize_code(reference);

  CodeBleuScore s;
  s.bleu = smoothed_bleu(cand_toks, ref_toks, config);
  s.weighted_ngram = weighted_ngram_match(cand_toks, ref_toks, config);
  s.ast = ast_ratio(cand, ref);
  s.dataflow = dataflow_ratio(cand, ref);
  s.composite = weights.alpha * s.bleu + weights.beta * s.weighted_ngram +
                weights.gamma * s.ast + weights.delta * s.dataflow;
  return s;
}

}  // namespace peftbench::metrics
