// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <cmath>
#include <functional>
#include <map>

#include "peftbench/metrics.hpp"
#include "peftbench/minilang.hpp"

namespace peftbench::metrics {

std::vector<std::string> tokenize_nl(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return out;
}

namespace {

std::string quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    if (c == '\n') {
      q += "\\n";
    } else if (c == '\t') {
      q += "\\t";
    } else {
      q += c;
    }
  }
  return q + '"';
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '_') {
      word += ch;
      continue;
    }
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
    if (!std::isspace(c)) out.emplace_back(1, ch);
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

}  // namespace

std::vector<std::string> tokenize_code(std::string_view source) {
  try {
    std::vector<std::string> out;
    for (auto& t : minilang::tokenize(source)) {
      out.push_back(t.kind == minilang::TokenKind::string_literal ? quote(t.lexeme)
                                                                  : std::move(t.lexeme));
    }
    return out;
  } catch (const minilang::ParseError&) {
    return split_words(source);
  }
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string_view to_string(PenaltyDirection d) {
  return d == PenaltyDirection::as_intended ? "as-intended" : "as-printed";
}

PenaltyDirection parse_penalty_direction(std::string_view s) {
  if (s == "as-intended") return PenaltyDirection::as_intended;
  if (s == "as-printed") return PenaltyDirection::as_printed;
  throw ConfigError("penalty direction must be one of {as-intended, as-printed}, got '" +
                    std::string(s) + "'");
}

void BleuConfig::validate() const {
  if (max_n < 1) throw ConfigError("BLEU max_n must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("BLEU epsilon must be > 0");
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len,
                       PenaltyDirection direction) {
  const double t = static_cast<double>(candidate_len);
  const double r = static_cast<double>(reference_len);
  if (direction == PenaltyDirection::as_intended) {
    if (t == 0.0) return 0.0;
    return std::min(1.0, std::exp(1.0 - r / t));
  }
  if (r == 0.0) return 1.0;
  return std::min(1.0, std::exp(1.0 - t / r));
}

namespace {

using Gram = std::vector<std::string>;
using Weigher = std::function<double(const Gram&)>;

std::map<Gram, std::size_t> count_ngrams(const std::vector<std::string>& toks, std::size_t n) {
  std::map<Gram, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[Gram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                  toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

BleuBreakdown score_with(const std::vector<std::string>& cand,
                         const std::vector<std::string>& ref, const BleuConfig& cfg,
                         const Weigher& weight) {
  cfg.validate();
  BleuBreakdown out;
  if (cand.empty()) return out;
  double log_sum = 0.0;
  for (int order = 1; order <= cfg.max_n; ++order) {
    const auto n = static_cast<std::size_t>(order);
    const auto cand_counts = count_ngrams(cand, n);
    const auto ref_counts = count_ngrams(ref, n);
    double matched = 0.0;
    double total = 0.0;
    double grams = 0.0;
    for (const auto& [gram, count] : cand_counts) {
      const double w = weight(gram);
      grams += static_cast<double>(count);
      total += w * static_cast<double>(count);
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += w * static_cast<double>(std::min(count, it->second));
    }
    double factor = 1.0;
    if (cand_counts.empty() && ref_counts.empty()) {
      factor = 1.0;
    } else if (total == 0.0) {
      factor = cfg.epsilon;
    } else {
      // The epsilon floor is taken over the plain n-gram count so that
      // uniform weights reduce to ordinary smoothed BLEU.
      factor = matched > 0.0 ? matched / total : cfg.epsilon / grams;
    }
    out.matches.push_back(matched);
    out.totals.push_back(total);
    out.factors.push_back(factor);
    log_sum += std::log(factor);
  }
  out.brevity = brevity_penalty(cand.size(), ref.size(), cfg.penalty);
  const double score = std::exp(log_sum / cfg.max_n) * out.brevity;
  out.score = std::clamp(score, 0.0, 1.0);
  return out;
}

}  // namespace

BleuBreakdown bleu_breakdown(const std::vector<std::string>& candidate,
                             const std::vector<std::string>& reference, const BleuConfig& config) {
  return score_with(candidate, reference, config, [](const Gram&) { return 1.0; });
}

double smoothed_bleu(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference, const BleuConfig& config) {
  return bleu_breakdown(candidate, reference, config).score;
}

double weighted_ngram_match(const std::vector<std::string>& candidate,
                            const std::vector<std::string>& reference,
                            const BleuConfig& config) {
  return score_with(candidate, reference, config, [](const Gram& gram) {
           double w = 0.0;
           for (const auto& tok : gram) w += minilang::is_keyword(tok) ? kKeywordWeight : 1.0;
           return w;
         }).score;
}

}  // namespace peftbench::metrics
