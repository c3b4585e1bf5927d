// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>

#include "peftbench/error.hpp"
#include "peftbench/tensor.hpp"

namespace peftbench {
namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void check_inner(const Matrix& a, const Matrix& b, std::size_t ak, std::size_t bk,
                 const char* op) {
  if (ak != bk) {
    throw ShapeError(std::string(op) + ": inner dimensions differ, " + a.shape_string() +
                     " vs " + b.shape_string());
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a, b, a.cols(), b.rows(), "matmul");
  const std::int64_t n = static_cast<std::int64_t>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Matrix c(a.rows(), m);
  const bool big = a.rows() * inner * m >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t i = 0; i < n; ++i) {
    auto crow = c.row_span(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(static_cast<std::size_t>(i), k);
      auto brow = b.row_span(k);
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a, b, a.rows(), b.rows(), "matmul_tn");
  const std::int64_t n = static_cast<std::int64_t>(a.cols());
  const std::size_t inner = a.rows();
  const std::size_t m = b.cols();
  Matrix c(a.cols(), m);
  const bool big = a.cols() * inner * m >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t i = 0; i < n; ++i) {
    auto crow = c.row_span(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < inner; ++k) {
      const double aki = a(k, static_cast<std::size_t>(i));
      auto brow = b.row_span(k);
      for (std::size_t j = 0; j < m; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a, b, a.cols(), b.cols(), "matmul_nt");
  const std::int64_t n = static_cast<std::int64_t>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t m = b.rows();
  Matrix c(a.rows(), m);
  const bool big = a.rows() * inner * m >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t i = 0; i < n; ++i) {
    auto arow = a.row_span(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < m; ++j) {
      auto brow = b.row_span(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      c(static_cast<std::size_t>(i), j) = acc;
    }
  }
  return c;
}

Matrix kron(const Matrix& a, const Matrix& b, std::size_t entry_cap) {
  if (a.empty() || b.empty()) throw ShapeError("kron: operands must be non-empty");
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (cols != 0 && rows > entry_cap / cols) {
    throw SizeError("kron: result " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " exceeds the entry cap of " + std::to_string(entry_cap));
  }
  Matrix c(rows, cols);
  const std::int64_t n = static_cast<std::int64_t>(rows);
  const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t r = 0; r < n; ++r) {
    const std::size_t ai = static_cast<std::size_t>(r) / b.rows();
    const std::size_t bi = static_cast<std::size_t>(r) % b.rows();
    auto crow = c.row_span(static_cast<std::size_t>(r));
    for (std::size_t aj = 0; aj < a.cols(); ++aj) {
      const double s = a(ai, aj);
      for (std::size_t bj = 0; bj < b.cols(); ++bj) crow[aj * b.cols() + bj] = s * b(bi, bj);
    }
  }
  return c;
}

}  // namespace peftbench
