// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

// Times the OpenMP kernels against their serial references and checks that
// both produce identical results.
//
//   bench_kernels [--repeats N]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>

#include <CLI11.hpp>

#include "peftbench/rng.hpp"
#include "peftbench/tensor.hpp"

using peftbench::Matrix;

namespace {

double best_ms(int repeats, const std::function<Matrix()>& fn, Matrix* result) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    *result = fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, int repeats, const std::function<Matrix()>& serial,
         const std::function<Matrix()>& parallel) {
  Matrix s, p;
  const double ts = best_ms(repeats, serial, &s);
  const double tp = best_ms(repeats, parallel, &p);
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name, ts, tp, ts / tp,
              s == p ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP kernel timings", "bench_kernels"};
  int repeats = 5;
  app.add_option("--repeats", repeats, "Timed runs per kernel, best is reported")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  peftbench::SeededRng rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  for (std::size_t n : {64, 128, 256}) {
    const Matrix a = rng.gaussian_matrix(n, n, 1.0);
    const Matrix b = rng.gaussian_matrix(n, n, 1.0);
    char name[64];
    std::snprintf(name, sizeof name, "matmul %zux%zu", n, n);
    row(name, repeats, [&] { return peftbench::serial::matmul(a, b); },
        [&] { return peftbench::matmul(a, b); });
    std::snprintf(name, sizeof name, "matmul_tn %zux%zu", n, n);
    row(name, repeats, [&] { return peftbench::serial::matmul_tn(a, b); },
        [&] { return peftbench::matmul_tn(a, b); });
    std::snprintf(name, sizeof name, "matmul_nt %zux%zu", n, n);
    row(name, repeats, [&] { return peftbench::serial::matmul_nt(a, b); },
        [&] { return peftbench::matmul_nt(a, b); });
  }
  for (std::size_t n : {4, 8, 16}) {
    const Matrix a = rng.gaussian_matrix(n, n, 1.0);
    const Matrix b = rng.gaussian_matrix(32, 32, 1.0);
    char name[64];
    std::snprintf(name, sizeof name, "kron %zux%zu (x) 32x32", n, n);
    row(name, repeats, [&] { return peftbench::serial::kron(a, b); },
        [&] { return peftbench::kron(a, b, peftbench::kKronEntryCap); });
  }
  return 0;
}
