// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peftbench/rng.hpp"
#include "peftbench/tensor.hpp"

namespace peftbench {

/// A trainable tensor with its gradient buffer. Frozen parameters never
/// receive gradient and are never touched by the optimizer.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string name, Matrix value, bool frozen = false);

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(0.0); }
};

enum class PeftMethod { full, lora, compacter };

std::string_view to_string(PeftMethod m);
std::optional<PeftMethod> parse_peft_method(std::string_view s);

enum class Activation { gelu, linear };

std::string_view to_string(Activation a);
std::optional<Activation> parse_activation(std::string_view s);

/// tanh-approximated GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);
Matrix apply_activation(const Matrix& z, Activation act);
/// dz = dy * act'(z), element-wise.
Matrix activation_backward(const Matrix& z, const Matrix& dy, Activation act);

struct ParamBudget {
  std::size_t trainable = 0;
  std::size_t total = 0;
  double ratio = 0.0;
};

ParamBudget make_budget(std::size_t trainable, std::size_t total);

// ---------------------------------------------------------------------------
// LoRA: delta = scaling * w_a * w_b, with w_a (in x r) and w_b (r x out).

struct LoraAdapter {
  Parameter w_a;
  Parameter w_b;
  std::size_t rank = 0;
  double scaling = 0.0;

  /// Zero-initialised adapter. scaling defaults to 1/rank.
  LoraAdapter(std::size_t in, std::size_t out, std::size_t rank, const std::string& name,
              std::optional<double> scaling = std::nullopt);

  std::size_t in() const { return w_a.value.rows(); }
  std::size_t out() const { return w_b.value.cols(); }
  std::size_t param_count() const { return rank * (in() + out()); }
};

/// scaling * w_a * w_b
Matrix lora_delta(const LoraAdapter& adapter);
/// x * W + scaling * (x * w_a) * w_b for every row of x.
Matrix lora_forward(const Matrix& x, const Matrix& w_frozen, const LoraAdapter& adapter);
/// W + scaling * w_a * w_b. Not idempotent: merging twice adds the delta twice.
Matrix lora_merge(const Matrix& w_frozen, const LoraAdapter& adapter);
/// LoRA w_a ~ N(0, stddev^2), w_b = 0.
void init_lora(LoraAdapter& adapter, SeededRng& rng, double stddev = 0.02);

// ---------------------------------------------------------------------------
// Compacter: PHM layers whose weight is sum_i A_i (x) (B_down_i * B_up_i), with
// the n x n matrices A_i shared by every PHM layer of a model.

struct SharedKroneckerBank {
  std::size_t n = 0;
  std::vector<Parameter> a_mats;

  SharedKroneckerBank(std::size_t n, const std::string& name);
  std::size_t param_count() const { return n * n * n; }
};

class PhmLayer {
 public:
  /// Throws ConfigError unless n divides both k and d and rank <= min(k/n, d/n).
  PhmLayer(std::shared_ptr<SharedKroneckerBank> bank, std::size_t k, std::size_t d,
           std::size_t rank, const std::string& name);

  std::size_t n() const { return bank_->n; }
  std::size_t k() const { return k_; }
  std::size_t d() const { return d_; }
  std::size_t rank() const { return rank_; }

  SharedKroneckerBank& bank() { return *bank_; }
  const SharedKroneckerBank& bank() const { return *bank_; }
  const std::shared_ptr<SharedKroneckerBank>& bank_ptr() const { return bank_; }

  std::vector<Parameter> b_down;  // n matrices, (k/n x rank)
  std::vector<Parameter> b_up;    // n matrices, (rank x d/n)
  Parameter bias;                 // 1 x d

  /// B_i = b_down[i] * b_up[i], shape (k/n x d/n).
  Matrix composed_b(std::size_t i) const;
  /// r(k + d) factor entries plus d bias entries; the bank is counted separately.
  std::size_t param_count() const { return rank_ * (k_ + d_) + d_; }

 private:
  std::shared_ptr<SharedKroneckerBank> bank_;
  std::size_t k_;
  std::size_t d_;
  std::size_t rank_;
};

/// Materialises the (k x d) PHM weight.
Matrix phm_weight(const PhmLayer& layer);
/// x * W_hat + bias for every row of x.
Matrix phm_forward(const Matrix& x, const PhmLayer& layer);
/// Accumulates gradients of bias, B factors and the shared bank given the
/// layer input x and upstream dy. Returns dx. Frozen parameters are skipped.
Matrix phm_backward(PhmLayer& layer, const Matrix& x, const Matrix& dy);

struct CompacterAdapter {
  PhmLayer down;  // d_model -> bottleneck
  PhmLayer up;    // bottleneck -> d_model
  Activation activation = Activation::gelu;

  CompacterAdapter(std::shared_ptr<SharedKroneckerBank> bank, std::size_t d_model,
                   std::size_t bottleneck, std::size_t rank, const std::string& name,
                   Activation activation = Activation::gelu);

  std::size_t param_count() const { return down.param_count() + up.param_count(); }
};

/// h + up(act(down(h))) for every row of h.
Matrix compacter_forward(const Matrix& h, const CompacterAdapter& adapter);

/// Bank and down-projection factors ~ N(0, stddev^2); the up-projection's
/// b_up factors and every bias start at zero, so the adapter is the identity.
void init_bank(SharedKroneckerBank& bank, SeededRng& rng, double stddev = 0.02);
void init_compacter(CompacterAdapter& adapter, SeededRng& rng, double stddev = 0.02);

/// Bottleneck width: d_model / 4 rounded down to a multiple of n (at least n).
std::size_t default_bottleneck(std::size_t d_model, std::size_t n);

}  // namespace peftbench
