// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "peftbench/metrics.hpp"

namespace peftbench::metrics {

namespace {

std::string trim_line_ends(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    const bool last = end == std::string_view::npos;
    if (last) end = text.size();
    std::size_t stop = end;
    while (stop > start && (text[stop - 1] == ' ' || text[stop - 1] == '\t' ||
                            text[stop - 1] == '\r')) {
      --stop;
    }
    out.append(text.substr(start, stop - start));
    if (last) break;
    out += '\n';
    start = end + 1;
  }
  return out;
}

}  // namespace

bool exact_match(std::string_view candidate, std::string_view reference) {
  return trim_line_ends(candidate) == trim_line_ends(reference);
}

double em_at_k(const std::vector<std::string>& samples, std::string_view reference) {
  if (samples.empty()) throw SizeError("EM@k needs at least one sample");
  const std::string ref = trim_line_ends(reference);
  std::size_t hits = 0;
  for (const auto& s : samples) hits += trim_line_ends(s) == ref ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
  if (c > n) {
    throw SizeError("pass@k needs c <= n, got c=" + std::to_string(c) + " n=" + std::to_string(n));
  }
  if (k < 1 || k > n) {
    throw SizeError("pass@k needs 1 <= k <= n, got k=" + std::to_string(k) +
                    " n=" + std::to_string(n));
  }
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (std::size_t i = n - c + 1; i <= n; ++i) {
    miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  }
  return 1.0 - miss;
}

}  // namespace peftbench::metrics
