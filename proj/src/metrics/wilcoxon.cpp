// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peftbench/metrics.hpp"

namespace peftbench::metrics {

namespace {

// Midranks doubled so that tied ranks stay integral.
std::vector<std::size_t> doubled_midranks(const std::vector<double>& magnitudes,
                                          double* tie_term) {
  const std::size_t m = magnitudes.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return magnitudes[x] < magnitudes[y]; });
  std::vector<std::size_t> ranks(m);
  *tie_term = 0.0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
    // Positions i..j (0-based) share rank ((i+1) + (j+1)) / 2.
    const std::size_t twice = i + j + 2;
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = twice;
    const double t = static_cast<double>(j - i + 1);
    *tie_term += t * t * t - t;
    i = j + 1;
  }
  return ranks;
}

// Number of sign assignments whose doubled positive-rank sum is <= limit.
double count_at_most(const std::vector<std::size_t>& ranks, std::size_t limit) {
  const std::size_t total = std::accumulate(ranks.begin(), ranks.end(), std::size_t{0});
  std::vector<double> ways(total + 1, 0.0);
  ways[0] = 1.0;
  std::size_t reach = 0;
  for (std::size_t r : ranks) {
    reach += r;
    for (std::size_t s = reach; s >= r; --s) {
      ways[s] += ways[s - r];
      if (s == r) break;
    }
  }
  double count = 0.0;
  for (std::size_t s = 0; s <= std::min(limit, total); ++s) count += ways[s];
  return count;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw SizeError("wilcoxon needs paired samples, got " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  if (a.empty()) throw SizeError("wilcoxon needs at least one pair");

  std::vector<double> mags;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d == 0.0) continue;
    mags.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  WilcoxonResult r;
  r.m = mags.size();
  if (r.m == 0) {
    r.degenerate = true;
    r.w = std::nan("");
    r.p_value = 1.0;
    return r;
  }

  double tie_term = 0.0;
  const auto ranks = doubled_midranks(mags, &tie_term);
  std::size_t plus2 = 0;
  std::size_t minus2 = 0;
  for (std::size_t i = 0; i < r.m; ++i) (positive[i] ? plus2 : minus2) += ranks[i];
  r.w_plus = static_cast<double>(plus2) / 2.0;
  r.w_minus = static_cast<double>(minus2) / 2.0;
  r.w = std::min(r.w_plus, r.w_minus);

  const double md = static_cast<double>(r.m);
  if (r.m <= kWilcoxonExactMax) {
    r.exact = true;
    const double tail = count_at_most(ranks, std::min(plus2, minus2));
    r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(r.m)));
    return r;
  }
  r.exact = false;
  const double mean = md * (md + 1.0) / 4.0;
  const double var = md * (md + 1.0) * (2.0 * md + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = std::min(0.0, r.w - mean + 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
  return r;
}

nlohmann::json to_json(const WilcoxonResult& r) {
  nlohmann::json j;
  j["m"] = r.m;
  j["degenerate"] = r.degenerate;
  j["W"] = r.degenerate ? nlohmann::json(nullptr) : nlohmann::json(r.w);
  j["W_plus"] = r.w_plus;
  j["W_minus"] = r.w_minus;
  j["p_value"] = r.p_value;
  j["method"] = r.degenerate ? "none" : (r.exact ? "exact" : "normal");
  return j;
}

}  // namespace peftbench::metrics
