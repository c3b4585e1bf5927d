// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library code they are used to check.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "peftbench/microformer.hpp"
#include "peftbench/peft.hpp"
#include "peftbench/rng.hpp"
#include "peftbench/tensor.hpp"

namespace oracle {

using peftbench::Matrix;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t s = 0; s < c.cols(); ++s)
      c(r, s) = a(r / b.rows(), s / b.cols()) * b(r % b.rows(), s % b.cols());
  return c;
}

inline Matrix plus(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) += b(i, j);
  return c;
}

inline Matrix times(const Matrix& a, double s) {
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) *= s;
  return c;
}

inline double max_abs(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

/// sum_i A_i (x) (B_down_i B_up_i), with the element-wise kron above.
inline Matrix phm_sum(const peftbench::PhmLayer& layer) {
  Matrix w(layer.k(), layer.d());
  for (std::size_t i = 0; i < layer.n(); ++i) {
    const Matrix b = oracle::matmul(layer.b_down[i].value, layer.b_up[i].value);
    w = oracle::plus(w, oracle::kron(layer.bank().a_mats[i].value, b));
  }
  return w;
}

/// Determinant by Gaussian elimination with partial pivoting.
inline double det(Matrix m) {
  const std::size_t n = m.rows();
  double d = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m(r, c)) > std::abs(m(p, c))) p = r;
    if (m(p, c) == 0.0) return 0.0;
    if (p != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(p, j), m(c, j));
      d = -d;
    }
    d *= m(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = m(r, c) / m(c, c);
      for (std::size_t j = c; j < n; ++j) m(r, j) -= f * m(c, j);
    }
  }
  return d;
}

/// Largest |minor| of order `order` over all row/column subsets.
inline double max_minor(const Matrix& m, std::size_t order) {
  if (order > m.rows() || order > m.cols()) return 0.0;
  double worst = 0.0;
  const std::uint32_t rlim = 1u << m.rows();
  const std::uint32_t clim = 1u << m.cols();
  for (std::uint32_t rs = 0; rs < rlim; ++rs) {
    if (static_cast<std::size_t>(std::popcount(rs)) != order) continue;
    for (std::uint32_t cs = 0; cs < clim; ++cs) {
      if (static_cast<std::size_t>(std::popcount(cs)) != order) continue;
      Matrix sub(order, order);
      std::size_t i = 0;
      for (std::size_t r = 0; r < m.rows(); ++r) {
        if (!(rs >> r & 1u)) continue;
        std::size_t j = 0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
          if (!(cs >> c & 1u)) continue;
          sub(i, j++) = m(r, c);
        }
        ++i;
      }
      worst = std::max(worst, std::abs(det(sub)));
    }
  }
  return worst;
}

/// Exact binomial coefficients from Pascal's triangle (n <= 60).
inline std::uint64_t binom(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::vector<std::uint64_t> row(n + 1, 0);
  row[0] = 1;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = i; j > 0; --j) row[j] += row[j - 1];
  return row[k];
}

/// pass@k as the exact rational (C(n,k) - C(n-c,k)) / C(n,k), rounded once.
inline double pass_at_k_exact(std::size_t n, std::size_t c, std::size_t k) {
  const std::uint64_t all = binom(n, k);
  const std::uint64_t miss = binom(n - c, k);
  return static_cast<double>(all - miss) / static_cast<double>(all);
}

/// Share of k-subsets of n samples that contain a passing one; bit i of
/// `passing` marks sample i.
inline double pass_at_k_enumerated(std::size_t n, std::uint32_t passing, std::size_t k) {
  std::uint64_t total = 0;
  std::uint64_t hit = 0;
  for (std::uint32_t s = 0; s < (1u << n); ++s) {
    if (static_cast<std::size_t>(std::popcount(s)) != k) continue;
    ++total;
    if (s & passing) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

struct WilcoxonBrute {
  double w = 0.0;
  double p = 1.0;
  std::size_t m = 0;
};

/// Midranks by counting, then every one of the 2^m sign assignments.
inline WilcoxonBrute wilcoxon_brute(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  WilcoxonBrute out;
  out.m = d.size();
  if (d.empty()) return out;
  std::vector<double> rank(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double less = 0.0;
    double same = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) less += 1.0;
      if (std::abs(d[j]) == std::abs(d[i])) same += 1.0;
    }
    rank[i] = less + (same + 1.0) / 2.0;
  }
  double total = 0.0;
  double plus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total += rank[i];
    if (d[i] > 0) plus += rank[i];
  }
  out.w = std::min(plus, total - plus);
  std::uint64_t extreme = 0;
  const std::uint64_t count = std::uint64_t{1} << d.size();
  for (std::uint64_t s = 0; s < count; ++s) {
    double t = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (s >> i & 1u) t += rank[i];
    if (std::min(t, total - t) <= out.w + 1e-9) ++extreme;
  }
  out.p = static_cast<double>(extreme) / static_cast<double>(count);
  return out;
}

/// One gradient comparison.
struct GradSample {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

/// Relative error with a 1e-6 floor on the denominator; below that floor the
/// comparison is effectively absolute at 1e-10.
inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Central differences on `per_param` coordinates of every unfrozen parameter.
inline std::vector<GradSample> gradcheck(peftbench::Microformer& model,
                                         const std::vector<int>& tokens,
                                         const std::vector<int>& targets, std::size_t per_param,
                                         std::uint64_t seed, double h = 1e-5) {
  model.zero_grad();
  model.loss_and_backward(tokens, targets);
  peftbench::SeededRng rng(seed);
  std::vector<GradSample> out;
  for (peftbench::Parameter* p : model.parameters()) {
    if (p->frozen) continue;
    const std::size_t size = p->size();
    std::vector<std::size_t> picks;
    if (size <= per_param) {
      for (std::size_t i = 0; i < size; ++i) picks.push_back(i);
    } else {
      for (std::size_t i = 0; i < per_param; ++i) picks.push_back(rng.below(size));
    }
    for (std::size_t idx : picks) {
      double& v = p->value.data()[idx];
      const double saved = v;
      v = saved + h;
      const double up = model.loss(tokens, targets);
      v = saved - h;
      const double down = model.loss(tokens, targets);
      v = saved;
      GradSample g;
      g.param = p->name;
      g.index = idx;
      g.analytic = p->grad.data()[idx];
      g.numeric = (up - down) / (2.0 * h);
      g.rel_error = rel_error(g.analytic, g.numeric);
      out.push_back(g);
    }
  }
  return out;
}

/// Replaces every adapter value with N(0, stddev^2) draws so that no adapter
/// gradient vanishes by construction.
inline void randomize_unfrozen(peftbench::Microformer& model, std::uint64_t seed,
                               double stddev = 0.3) {
  peftbench::SeededRng rng(seed);
  for (peftbench::Parameter* p : model.parameters()) {
    if (p->frozen) continue;
    for (double& v : p->value.data()) v = stddev * rng.gaussian();
  }
}

}  // namespace oracle
