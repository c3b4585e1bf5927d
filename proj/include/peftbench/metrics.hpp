// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

// Sentence-level evaluation metrics for text and code generation.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "peftbench/error.hpp"

namespace peftbench::metrics {

// ---------------------------------------------------------------------------
// Tokenisation

/// Lowercased words; every punctuation character is its own token.
std::vector<std::string> tokenize_nl(std::string_view text);

/// Mini-language lexemes. String literals keep their quotes and escapes so
/// joining the tokens with spaces re-lexes to the same stream. Text the lexer
/// rejects falls back to a word/punctuation split.
std::vector<std::string> tokenize_code(std::string_view source);

std::string join_tokens(const std::vector<std::string>& tokens);

// ---------------------------------------------------------------------------
// BLEU

enum class PenaltyDirection {
  as_intended,  // min(1, exp(1 - |R| / |T|)): short candidates are penalised
  as_printed,   // min(1, exp(1 - |T| / |R|))
};

std::string_view to_string(PenaltyDirection d);
PenaltyDirection parse_penalty_direction(std::string_view s);

struct BleuConfig {
  int max_n = 4;
  double epsilon = 0.1;
  PenaltyDirection penalty = PenaltyDirection::as_intended;

  void validate() const;
};

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len,
                       PenaltyDirection direction);

/// Per-order precision terms before the geometric mean. factor[n-1] is
/// m_n / l_n with the epsilon floor applied.
struct BleuBreakdown {
  std::vector<double> matches;   // clipped (weighted) matches per order
  std::vector<double> totals;    // candidate (weighted) n-gram mass per order
  std::vector<double> factors;
  double brevity = 1.0;
  double score = 0.0;
};

/// Smoothed sentence BLEU. An order for which neither sequence has an n-gram
/// contributes 1; any other zero match count or zero candidate count is
/// replaced by epsilon. Empty candidate scores 0.
BleuBreakdown bleu_breakdown(const std::vector<std::string>& candidate,
                             const std::vector<std::string>& reference,
                             const BleuConfig& config = {});
double smoothed_bleu(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference, const BleuConfig& config = {});

/// Keyword tokens weigh this much in weighted_ngram_match; others weigh 1.
inline constexpr double kKeywordWeight = 4.0;

/// BLEU in which an n-gram's weight is the sum of its tokens' weights.
double weighted_ngram_match(const std::vector<std::string>& candidate,
                            const std::vector<std::string>& reference,
                            const BleuConfig& config = {});

// ---------------------------------------------------------------------------
// CodeBLEU

struct CodeBleuWeights {
  double alpha = 0.25;
  double beta = 0.25;
  double gamma = 0.25;
  double delta = 0.25;

  void validate() const;
};

/// Multiset subtree overlap relative to the reference. Candidate parse
/// failure scores 0. Throws DataError when the reference does not parse.
double ast_match(std::string_view candidate, std::string_view reference);

/// Share of reference def-use edges found in the candidate, matching on
/// (slot, def kind, use kind). A reference without edges scores 1.
double dataflow_match(std::string_view candidate, std::string_view reference);

struct CodeBleuScore {
  double composite = 0.0;
  double bleu = 0.0;
  double weighted_ngram = 0.0;
  double ast = 0.0;
  double dataflow = 0.0;
};

CodeBleuScore codebleu(std::string_view candidate, std::string_view reference,
                       const CodeBleuWeights& weights = {}, const BleuConfig& config = {});

// ---------------------------------------------------------------------------
// Exact match and pass@k

/// Byte equality after trimming trailing whitespace from every line.
bool exact_match(std::string_view candidate, std::string_view reference);

/// Mean exact match over all samples. Throws SizeError when samples is empty.
double em_at_k(const std::vector<std::string>& samples, std::string_view reference);

/// 1 - C(n-c, k) / C(n, k) by the product form. Throws SizeError unless
/// 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test

inline constexpr std::size_t kWilcoxonExactMax = 20;

struct WilcoxonResult {
  double w = 0.0;        // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t m = 0;     // non-zero differences
  bool exact = true;
  bool degenerate = false;  // every difference was zero
};

/// Zero differences are dropped, ties get midranks. p is exact for
/// m <= kWilcoxonExactMax, otherwise the tie-corrected normal approximation
/// with continuity correction. Throws SizeError on length mismatch or empty input.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

nlohmann::json to_json(const WilcoxonResult& r);

// ---------------------------------------------------------------------------
// Corpus evaluation

enum class EvalTask { summarize, generate };

std::string_view to_string(EvalTask t);
EvalTask parse_eval_task(std::string_view s);

struct CorpusSample {
  std::string id;
  std::vector<std::string> candidates;
  std::vector<std::string> references;
};

/// Reads JSONL of {id, candidates: [text], references: [text]} (a single
/// "reference" string is also accepted). Throws DataError naming the line.
std::vector<CorpusSample> read_corpus(std::istream& in, const std::string& source_name);

struct SampleScore {
  std::string id;
  double score = 0.0;  // BLEU-4 for summarize, CodeBLEU composite for generate
  double bleu = 0.0;
  std::optional<CodeBleuScore> code;
  std::map<std::size_t, double> em_at;
};

struct PassAtK {
  std::size_t tasks = 0;
  std::map<std::size_t, double> mean;  // by k
};

struct MetricReport {
  EvalTask task = EvalTask::summarize;
  std::size_t samples = 0;
  double bleu4 = 0.0;
  std::optional<CodeBleuScore> codebleu;
  std::map<std::size_t, double> em_at;
  std::optional<PassAtK> pass;
};

struct CorpusConfig {
  EvalTask task = EvalTask::summarize;
  std::vector<std::size_t> ks{1, 10};
  BleuConfig bleu;
  CodeBleuWeights weights;
};

/// Scores every sample against its first reference (first candidate for the
/// BLEU and CodeBLEU means, the first k candidates for EM@k) and averages.
/// Samples are scored in parallel and reduced in input order. Throws
/// DataError on an empty corpus or when a sample has fewer than max(ks)
/// candidates in generate mode.
MetricReport evaluate_corpus(const std::vector<CorpusSample>& samples, const CorpusConfig& config,
                             std::vector<SampleScore>* per_sample = nullptr);

nlohmann::json to_json(const MetricReport& r);
/// Two-column metric/value table with aligned columns.
std::string to_tsv(const MetricReport& r);

}  // namespace peftbench::metrics
