// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>

#include "peftbench/tensor.hpp"

namespace peftbench {

/// Deterministic 64-bit generator (SplitMix64, Steele/Lea/Flood 2014).
///
/// state += 0x9E3779B97F4A7C15; z = state;
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
/// return z ^ (z >> 31);
///
/// Uniform doubles take the top 53 bits; gaussians use Box-Muller with both
/// outputs consumed in order. Test fixtures depend on this exact sequence, so
/// do not change the algorithm. Not thread-safe; give each thread its own.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  double gaussian(double mean = 0.0, double stddev = 1.0);

  Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  std::optional<double> spare_;
};

/// Derives an independent stream seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label);

}  // namespace peftbench
