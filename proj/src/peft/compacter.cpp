// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "peftbench/error.hpp"
#include "peftbench/peft.hpp"

namespace peftbench {

SharedKroneckerBank::SharedKroneckerBank(std::size_t n, const std::string& name) : n(n) {
  if (n == 0) throw ConfigError("Kronecker bank size n must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    a_mats.emplace_back(name + ".a" + std::to_string(i), Matrix(n, n));
  }
}

PhmLayer::PhmLayer(std::shared_ptr<SharedKroneckerBank> bank, std::size_t k, std::size_t d,
                   std::size_t rank, const std::string& name)
    : bias(name + ".bias", Matrix(1, d)), bank_(std::move(bank)), k_(k), d_(d), rank_(rank) {
  if (!bank_) throw ConfigError("PHM layer requires a Kronecker bank");
  const std::size_t n = bank_->n;
  if (k == 0 || d == 0 || k % n != 0 || d % n != 0) {
    throw ConfigError("PHM layer: n=" + std::to_string(n) + " must divide k=" +
                      std::to_string(k) + " and d=" + std::to_string(d));
  }
  if (rank == 0 || rank > std::min(k / n, d / n)) {
    throw ConfigError("PHM layer: rank " + std::to_string(rank) + " must lie in [1, " +
                      std::to_string(std::min(k / n, d / n)) + "] for n=" + std::to_string(n) +
                      ", k=" + std::to_string(k) + ", d=" + std::to_string(d));
  }
  for (std::size_t i = 0; i < n; ++i) {
    b_down.emplace_back(name + ".b_down" + std::to_string(i), Matrix(k / n, rank));
    b_up.emplace_back(name + ".b_up" + std::to_string(i), Matrix(rank, d / n));
  }
}

Matrix PhmLayer::composed_b(std::size_t i) const {
  return low_rank_product(b_down.at(i).value, b_up.at(i).value);
}

Matrix phm_weight(const PhmLayer& layer) {
  const std::size_t n = layer.n();
  const std::size_t kb = layer.k() / n;
  const std::size_t db = layer.d() / n;
  Matrix w(layer.k(), layer.d());
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& a = layer.bank().a_mats[i].value;
    const Matrix b = layer.composed_b(i);
    // Accumulate A_i (x) B_i block by block instead of materialising each term.
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        const double s = a(p, q);
        for (std::size_t r = 0; r < kb; ++r)
          for (std::size_t c = 0; c < db; ++c) w(p * kb + r, q * db + c) += s * b(r, c);
      }
  }
  return w;
}

Matrix phm_forward(const Matrix& x, const PhmLayer& layer) {
  if (x.cols() != layer.k()) {
    throw ShapeError("phm_forward: input " + x.shape_string() + " vs k=" +
                     std::to_string(layer.k()));
  }
  Matrix y = matmul(x, phm_weight(layer));
  add_row_inplace(y, layer.bias.value);
  return y;
}

Matrix phm_backward(PhmLayer& layer, const Matrix& x, const Matrix& dy) {
  const std::size_t n = layer.n();
  const std::size_t kb = layer.k() / n;
  const std::size_t db = layer.d() / n;
  if (!layer.bias.frozen) axpy_inplace(layer.bias.grad, column_sums(dy));

  const Matrix dw = matmul_tn(x, dy);  // k x d
  for (std::size_t i = 0; i < n; ++i) {
    Parameter& a = layer.bank().a_mats[i];
    const Matrix b = layer.composed_b(i);
    Matrix db_i(kb, db);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        const double s = a.value(p, q);
        double da = 0.0;
        for (std::size_t r = 0; r < kb; ++r)
          for (std::size_t c = 0; c < db; ++c) {
            const double g = dw(p * kb + r, q * db + c);
            da += g * b(r, c);
            db_i(r, c) += s * g;
          }
        if (!a.frozen) a.grad(p, q) += da;
      }
    Parameter& down = layer.b_down[i];
    Parameter& up = layer.b_up[i];
    if (!down.frozen) axpy_inplace(down.grad, matmul_nt(db_i, up.value));
    if (!up.frozen) axpy_inplace(up.grad, matmul_tn(down.value, db_i));
  }
  return matmul_nt(dy, phm_weight(layer));
}

CompacterAdapter::CompacterAdapter(std::shared_ptr<SharedKroneckerBank> bank,
                                   std::size_t d_model, std::size_t bottleneck,
                                   std::size_t rank, const std::string& name,
                                   Activation activation)
    : down(bank, d_model, bottleneck, rank, name + ".down"),
      up(bank, bottleneck, d_model, rank, name + ".up"),
      activation(activation) {}

Matrix compacter_forward(const Matrix& h, const CompacterAdapter& adapter) {
  const Matrix z = phm_forward(h, adapter.down);
  Matrix out = phm_forward(apply_activation(z, adapter.activation), adapter.up);
  axpy_inplace(out, h);
  return out;
}

void init_bank(SharedKroneckerBank& bank, SeededRng& rng, double stddev) {
  for (auto& a : bank.a_mats) a.value = rng.gaussian_matrix(bank.n, bank.n, stddev);
}

void init_compacter(CompacterAdapter& adapter, SeededRng& rng, double stddev) {
  for (std::size_t i = 0; i < adapter.down.n(); ++i) {
    auto& dd = adapter.down.b_down[i].value;
    auto& du = adapter.down.b_up[i].value;
    dd = rng.gaussian_matrix(dd.rows(), dd.cols(), stddev);
    du = rng.gaussian_matrix(du.rows(), du.cols(), stddev);
    auto& ud = adapter.up.b_down[i].value;
    ud = rng.gaussian_matrix(ud.rows(), ud.cols(), stddev);
    adapter.up.b_up[i].value.fill(0.0);
  }
  adapter.down.bias.value.fill(0.0);
  adapter.up.bias.value.fill(0.0);
}

std::size_t default_bottleneck(std::size_t d_model, std::size_t n) {
  const std::size_t b = (d_model / 4) / n * n;
  return std::max(b, n);
}

}  // namespace peftbench
