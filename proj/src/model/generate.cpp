// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "impl.hpp"

namespace peftbench {

namespace {

int argmax(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

int sample(std::span<const double> row, double temperature, SeededRng& rng) {
  const double mx = *std::max_element(row.begin(), row.end());
  std::vector<double> w(row.size());
  double z = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    w[j] = std::exp((row[j] - mx) / temperature);
    z += w[j];
  }
  double u = rng.uniform() * z;
  for (std::size_t j = 0; j < w.size(); ++j) {
    u -= w[j];
    if (u < 0.0) return static_cast<int>(j);
  }
  return argmax(row);
}

}  // namespace

std::vector<std::vector<int>> Microformer::generate(std::span<const int> prompt,
                                                    std::size_t max_new, const Decode& mode,
                                                    std::size_t k, int end_token) const {
  const bool greedy = mode.greedy || mode.temperature < kGreedyTemperature;
  SeededRng rng(mode.seed);
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < k; ++i) {
    if (greedy && i > 0) {
      out.push_back(out.front());
      continue;
    }
    std::vector<int> seq(prompt.begin(), prompt.end());
    std::vector<int> produced;
    while (produced.size() < max_new && seq.size() < config_.max_seq_len) {
      const Matrix logits = forward(seq);
      auto last = logits.row_span(logits.rows() - 1);
      const int next = greedy ? argmax(last) : sample(last, mode.temperature, rng);
      if (next == end_token) break;
      produced.push_back(next);
      seq.push_back(next);
    }
    out.push_back(std::move(produced));
  }
  return out;
}

}  // namespace peftbench
