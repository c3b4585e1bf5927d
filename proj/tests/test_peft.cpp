// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <memory>

#include "oracles.hpp"
#include "peftbench/checkpoint.hpp"
#include "peftbench/error.hpp"
#include "peftbench/microformer.hpp"
#include "peftbench/peft.hpp"

using namespace peftbench;

namespace {

LoraAdapter random_lora(std::size_t in, std::size_t out, std::size_t r, SeededRng& rng) {
  LoraAdapter ad(in, out, r, "t");
  ad.w_a.value = rng.gaussian_matrix(in, r, 1.0);
  ad.w_b.value = rng.gaussian_matrix(r, out, 1.0);
  return ad;
}

void randomize(PhmLayer& layer, SeededRng& rng) {
  for (auto& a : layer.bank().a_mats) a.value = rng.gaussian_matrix(layer.n(), layer.n(), 1.0);
  for (auto& p : layer.b_down) p.value = rng.gaussian_matrix(p.value.rows(), p.value.cols(), 1.0);
  for (auto& p : layer.b_up) p.value = rng.gaussian_matrix(p.value.rows(), p.value.cols(), 1.0);
  layer.bias.value = rng.gaussian_matrix(1, layer.d(), 1.0);
}

std::size_t enumerate_unfrozen(const Microformer& m) {
  std::size_t n = 0;
  for (const Parameter* p : m.parameters())
    if (!p->frozen) n += p->value.rows() * p->value.cols();
  return n;
}

std::size_t enumerate_all(const Microformer& m) {
  std::size_t n = 0;
  for (const Parameter* p : m.parameters()) n += p->value.rows() * p->value.cols();
  return n;
}

}  // namespace

TEST_CASE("lora forward") {
  SeededRng rng(11);
  const Matrix w = rng.gaussian_matrix(6, 5, 1.0);
  const Matrix x = rng.gaussian_matrix(3, 6, 1.0);

  SUBCASE("zero w_a gives the base product") {
    LoraAdapter ad = random_lora(6, 5, 2, rng);
    ad.w_a.value.fill(0.0);
    CHECK(lora_forward(x, w, ad) == matmul(x, w));
  }
  SUBCASE("rank 4 scales by a quarter") {
    LoraAdapter ad(6, 5, 4, "t");
    CHECK(ad.scaling == 0.25);
    ad.w_a.value = rng.gaussian_matrix(6, 4, 1.0);
    ad.w_b.value = rng.gaussian_matrix(4, 5, 1.0);
    const Matrix delta = oracle::times(oracle::matmul(ad.w_a.value, ad.w_b.value), 0.25);
    CHECK(oracle::max_abs(lora_delta(ad), delta) <= 1e-12);
  }
  SUBCASE("explicit scaling override") {
    LoraAdapter ad(6, 5, 4, "t", 2.0);
    CHECK(ad.scaling == 2.0);
  }
  SUBCASE("equals the merged-matrix product") {
    for (std::size_t r : {1, 2, 4, 8}) {
      const LoraAdapter ad = random_lora(6, 5, r, rng);
      const Matrix merged =
          oracle::plus(w, oracle::times(oracle::matmul(ad.w_a.value, ad.w_b.value), 1.0 / r));
      CHECK(oracle::max_abs(lora_forward(x, w, ad), oracle::matmul(x, merged)) <= 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    const LoraAdapter ad = random_lora(6, 5, 2, rng);
    CHECK_THROWS_AS(lora_forward(x, Matrix(5, 5), ad), ShapeError);
    CHECK_THROWS_AS(lora_forward(Matrix(3, 4), w, ad), ShapeError);
  }
}

TEST_CASE("lora merge") {
  SeededRng rng(12);
  const Matrix w = rng.gaussian_matrix(8, 8, 1.0);

  SUBCASE("zero adapter leaves the weight unchanged") {
    LoraAdapter ad(8, 8, 4, "t");
    CHECK(lora_merge(w, ad) == w);
  }
  SUBCASE("merge then forward matches adapter forward on 64 inputs") {
    const LoraAdapter ad = random_lora(8, 8, 4, rng);
    const Matrix merged = lora_merge(w, ad);
    double worst = 0.0;
    for (int i = 0; i < 64; ++i) {
      const Matrix x = rng.gaussian_matrix(1, 8, 1.0);
      worst = std::max(worst, max_abs_diff(matmul(x, merged), lora_forward(x, w, ad)));
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("merging twice adds the delta twice") {
    const LoraAdapter ad = random_lora(8, 8, 2, rng);
    const Matrix twice = lora_merge(lora_merge(w, ad), ad);
    const Matrix expect =
        oracle::plus(w, oracle::times(oracle::matmul(ad.w_a.value, ad.w_b.value), 2.0 / 2));
    CHECK(oracle::max_abs(twice, expect) <= 1e-12);
    CHECK(max_abs_diff(twice, lora_merge(w, ad)) > 0.0);
  }
  SUBCASE("shape mismatch") {
    const LoraAdapter ad = random_lora(8, 8, 2, rng);
    CHECK_THROWS_AS(lora_merge(Matrix(8, 7), ad), ShapeError);
  }
}

TEST_CASE("lora init") {
  LoraAdapter a(8, 8, 4, "t");
  LoraAdapter b(8, 8, 4, "t");
  LoraAdapter c(8, 8, 4, "t");
  SeededRng r1(5), r2(5), r3(6);
  init_lora(a, r1);
  init_lora(b, r2);
  init_lora(c, r3);
  CHECK(a.w_a.value == b.w_a.value);
  CHECK(frobenius_distance(a.w_a.value, c.w_a.value) > 0.0);
  CHECK(a.w_b.value == Matrix(4, 8));
  CHECK(lora_delta(a) == Matrix(8, 8));
}

TEST_CASE("phm weight") {
  SeededRng rng(13);

  SUBCASE("n=1 is a scalar times B") {
    auto bank = std::make_shared<SharedKroneckerBank>(1, "bank");
    PhmLayer layer(bank, 3, 5, 2, "l");
    randomize(layer, rng);
    const Matrix expect =
        oracle::times(oracle::matmul(layer.b_down[0].value, layer.b_up[0].value),
                      bank->a_mats[0].value(0, 0));
    CHECK(oracle::max_abs(phm_weight(layer), expect) <= 1e-12);
  }
  SUBCASE("n=2, k=d=4, r=1 against the literal sum") {
    auto bank = std::make_shared<SharedKroneckerBank>(2, "bank");
    PhmLayer layer(bank, 4, 4, 1, "l");
    randomize(layer, rng);
    const Matrix w = phm_weight(layer);
    CHECK(w.rows() == 4);
    CHECK(w.cols() == 4);
    CHECK(oracle::max_abs(w, oracle::phm_sum(layer)) <= 1e-12);
  }
  SUBCASE("random shapes against the literal sum") {
    for (int t = 0; t < 30; ++t) {
      const std::size_t n = std::size_t{1} << rng.below(3);
      const std::size_t k = n * (1 + rng.below(4));
      const std::size_t d = n * (1 + rng.below(4));
      const std::size_t r = 1 + rng.below(std::min(k / n, d / n));
      auto bank = std::make_shared<SharedKroneckerBank>(n, "bank");
      PhmLayer layer(bank, k, d, r, "l");
      randomize(layer, rng);
      CHECK(oracle::max_abs(phm_weight(layer), oracle::phm_sum(layer)) <= 1e-12);
    }
  }
  SUBCASE("zero b_up gives a zero weight") {
    auto bank = std::make_shared<SharedKroneckerBank>(4, "bank");
    PhmLayer layer(bank, 8, 8, 2, "l");
    randomize(layer, rng);
    for (auto& p : layer.b_up) p.value.fill(0.0);
    CHECK(phm_weight(layer) == Matrix(8, 8));
  }
  SUBCASE("divisibility and rank checks name the dimensions") {
    auto bank = std::make_shared<SharedKroneckerBank>(4, "bank");
    try {
      PhmLayer layer(bank, 6, 8, 1, "l");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("n=4") != std::string::npos);
      CHECK(msg.find("k=6") != std::string::npos);
      CHECK(msg.find("d=8") != std::string::npos);
    }
    CHECK_THROWS_AS(PhmLayer(bank, 8, 8, 3, "l"), ConfigError);
    CHECK_THROWS_AS(PhmLayer(bank, 8, 8, 0, "l"), ConfigError);
  }
  SUBCASE("composed B has bounded rank") {
    for (std::size_t r : {1, 2}) {
      auto bank = std::make_shared<SharedKroneckerBank>(2, "bank");
      PhmLayer layer(bank, 8, 8, r, "l");
      randomize(layer, rng);
      for (std::size_t i = 0; i < 2; ++i) {
        CHECK(oracle::max_minor(layer.composed_b(i), r + 1) <= 1e-9);
        CHECK(oracle::max_minor(layer.composed_b(i), r) > 1e-6);
      }
    }
  }
}

TEST_CASE("shared bank is observed by every layer") {
  SeededRng rng(14);
  auto bank = std::make_shared<SharedKroneckerBank>(2, "bank");
  PhmLayer a(bank, 4, 6, 1, "a");
  PhmLayer b(bank, 6, 4, 1, "b");
  randomize(a, rng);
  randomize(b, rng);
  const Matrix wa = phm_weight(a);
  const Matrix wb = phm_weight(b);
  bank->a_mats[1].value(0, 1) += 1.0;
  CHECK(phm_weight(a) != wa);
  CHECK(phm_weight(b) != wb);
  CHECK(oracle::max_abs(phm_weight(a), oracle::phm_sum(a)) <= 1e-12);
  CHECK(oracle::max_abs(phm_weight(b), oracle::phm_sum(b)) <= 1e-12);
}

TEST_CASE("compacter forward") {
  SeededRng rng(15);
  auto bank = std::make_shared<SharedKroneckerBank>(2, "bank");
  CompacterAdapter ad(bank, 8, 4, 1, "ad");
  randomize(ad.down, rng);
  randomize(ad.up, rng);
  const Matrix h = rng.gaussian_matrix(3, 8, 1.0);

  SUBCASE("output shape equals input shape") {
    CHECK(compacter_forward(h, ad).rows() == 3);
    CHECK(compacter_forward(h, ad).cols() == 8);
  }
  SUBCASE("materialised-weight composition") {
    Matrix z = oracle::matmul(h, oracle::phm_sum(ad.down));
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) {
        const double v = z(i, j) + ad.down.bias.value(0, j);
        z(i, j) = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
      }
    Matrix y = oracle::matmul(z, oracle::phm_sum(ad.up));
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += ad.up.bias.value(0, j) + h(i, j);
    CHECK(oracle::max_abs(compacter_forward(h, ad), y) <= 1e-12);
  }
  SUBCASE("linear activation collapses to one affine map") {
    ad.activation = Activation::linear;
    const Matrix wd = oracle::phm_sum(ad.down);
    const Matrix wu = oracle::phm_sum(ad.up);
    const Matrix m = oracle::plus(Matrix::identity(8), oracle::matmul(wd, wu));
    Matrix expect = oracle::matmul(h, m);
    const Matrix bias = oracle::plus(oracle::matmul(ad.down.bias.value, wu), ad.up.bias.value);
    for (std::size_t i = 0; i < expect.rows(); ++i)
      for (std::size_t j = 0; j < expect.cols(); ++j) expect(i, j) += bias(0, j);
    CHECK(oracle::max_abs(compacter_forward(h, ad), expect) <= 1e-12);
  }
  SUBCASE("zero up projection is the identity") {
    for (auto& p : ad.up.b_up) p.value.fill(0.0);
    ad.up.bias.value.fill(0.0);
    CHECK(compacter_forward(h, ad) == h);
  }
  SUBCASE("init is the identity and deterministic") {
    auto bank2 = std::make_shared<SharedKroneckerBank>(2, "bank");
    CompacterAdapter fresh(bank2, 8, 4, 1, "ad");
    SeededRng r1(3);
    init_bank(*bank2, r1);
    init_compacter(fresh, r1);
    CHECK(compacter_forward(h, fresh) == h);
    CHECK(frobenius_distance(fresh.down.b_down[0].value, Matrix(4, 1)) > 0.0);

    auto bank3 = std::make_shared<SharedKroneckerBank>(2, "bank");
    CompacterAdapter again(bank3, 8, 4, 1, "ad");
    SeededRng r2(3);
    init_bank(*bank3, r2);
    init_compacter(again, r2);
    CHECK(again.down.b_down[1].value == fresh.down.b_down[1].value);
    CHECK(bank3->a_mats[0].value == bank2->a_mats[0].value);
  }
  SUBCASE("input width mismatch") {
    CHECK_THROWS_AS(compacter_forward(Matrix(1, 6), ad), ShapeError);
  }
}

TEST_CASE("activations") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(10.0) == doctest::Approx(10.0));
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const double h = 1e-6;
    CHECK(gelu_grad(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-8));
  }
  CHECK(parse_activation("gelu") == Activation::gelu);
  CHECK_FALSE(parse_activation("relu").has_value());
  CHECK(parse_peft_method("compacter") == PeftMethod::compacter);
  CHECK_FALSE(parse_peft_method("adapterx").has_value());
}

TEST_CASE("parameter counts") {
  SUBCASE("single 8x8 lora site") {
    LoraAdapter ad(8, 8, 4, "t");
    CHECK(ad.param_count() == 64);
    CHECK(ad.w_a.size() + ad.w_b.size() == 64);
  }
  SUBCASE("single phm layer k=d=8, n=4, r=1") {
    auto bank = std::make_shared<SharedKroneckerBank>(4, "bank");
    PhmLayer layer(bank, 8, 8, 1, "l");
    std::size_t factors = 0;
    for (const auto& p : layer.b_down) factors += p.size();
    for (const auto& p : layer.b_up) factors += p.size();
    CHECK(factors == 16);
    CHECK(layer.param_count() == 16 + 8);
    std::size_t bank_entries = 0;
    for (const auto& a : bank->a_mats) bank_entries += a.size();
    CHECK(bank_entries == 64);
    CHECK(bank->param_count() == 64);
  }
  SUBCASE("model budgets match enumeration") {
    ModelConfig cfg;
    cfg.vocab_size = 40;
    for (PeftMethod method : {PeftMethod::full, PeftMethod::lora, PeftMethod::compacter}) {
      Microformer m(cfg, 3);
      if (method != PeftMethod::full) m.apply_peft(method, 4);
      const ParamBudget b = m.count_params();
      CHECK(b.trainable == enumerate_unfrozen(m));
      CHECK(b.total == enumerate_all(m));
      CHECK(b.ratio == static_cast<double>(b.trainable) / static_cast<double>(b.total));
      if (method == PeftMethod::full) {
        CHECK(b.ratio == 1.0);
      } else {
        CHECK(b.trainable < b.total);
      }
    }
  }
  SUBCASE("lora closed form") {
    ModelConfig cfg;
    cfg.vocab_size = 40;
    Microformer m(cfg, 3);
    m.apply_peft(PeftMethod::lora, 4);
    // Query and value projections in each block.
    CHECK(m.count_params().trainable == cfg.n_layers * 2 * 4 * (32 + 32));
    CHECK(m.count_params().ratio < 0.05);
  }
  SUBCASE("compacter closed form") {
    ModelConfig cfg;
    cfg.vocab_size = 40;
    Microformer m(cfg, 3);
    m.apply_peft(PeftMethod::compacter, 4);
    const std::size_t b = default_bottleneck(32, 4);
    CHECK(b == 8);
    const std::size_t per_adapter = (1 * (32 + b) + b) + (1 * (b + 32) + 32);
    CHECK(m.count_params().trainable == 64 + cfg.n_layers * 2 * per_adapter);
  }
}

TEST_CASE("default bottleneck") {
  CHECK(default_bottleneck(32, 4) == 8);
  CHECK(default_bottleneck(40, 4) == 8);
  CHECK(default_bottleneck(8, 4) == 4);
  CHECK(default_bottleneck(128, 1) == 32);
}

TEST_CASE("adapter json round trip is exact") {
  ModelConfig cfg;
  cfg.vocab_size = 30;
  for (PeftMethod method : {PeftMethod::lora, PeftMethod::compacter}) {
    Microformer a(cfg, 1);
    a.apply_peft(method, 2);
    oracle::randomize_unfrozen(a, 9);
    const nlohmann::json doc = nlohmann::json::parse(adapters_to_json(a).dump());
    CHECK(doc.at("method") == std::string(to_string(method)));

    Microformer b(cfg, 1);
    b.apply_peft(method, 7);
    adapters_from_json(b, doc);
    CHECK(a.flat_values() == b.flat_values());

    Microformer other(cfg, 1);
    other.apply_peft(method == PeftMethod::lora ? PeftMethod::compacter : PeftMethod::lora, 2);
    CHECK_THROWS_AS(adapters_from_json(other, doc), DataError);
  }
  Microformer full(cfg, 1);
  CHECK_THROWS_AS(adapters_to_json(full), ConfigError);
}
