// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "peftbench/peft.hpp"
#include "peftbench/rng.hpp"
#include "peftbench/tensor.hpp"

namespace peftbench {

/// Target id that excludes a position from the loss.
inline constexpr int kIgnoreTarget = -1;

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 128;
  PeftMethod peft_method = PeftMethod::full;
  std::size_t lora_rank = 4;
  std::optional<double> lora_scaling;  // defaults to 1 / lora_rank
  std::size_t compacter_n = 4;
  std::size_t phm_rank = 1;
  std::size_t bottleneck = 0;  // 0 selects default_bottleneck(d_model, compacter_n)
  Activation adapter_activation = Activation::gelu;
  double init_std = 0.02;       // hidden projections and embeddings
  double head_init_std = 0.0;   // output projection; 0 selects 1 / sqrt(d_model)
  double adapter_init_std = 0.02;

  /// Throws ConfigError when divisibility or positivity constraints fail.
  void validate() const;
  std::size_t resolved_bottleneck() const;
};

/// Decoder-only pre-LN transformer with analytic backpropagation.
///
/// Every weight is a Parameter; parameters() lists them in a fixed declaration
/// order that the checkpoint format relies on:
///   tok_emb, pos_emb,
///   per block: ln1.{g,b} wq wk wv wo ln2.{g,b} w1 b1 w2 b2,
///   ln_f.{g,b} w_out b_out,
///   then adapters (LoRA: per block q.{a,b} v.{a,b};
///   Compacter: bank a0..a{n-1}, then per block attn/ffn adapter factors).
class Microformer {
 public:
  /// Builds a full-mode model with a seeded base initialisation.
  Microformer(ModelConfig config, std::uint64_t seed);

  Microformer(const Microformer&) = delete;
  Microformer& operator=(const Microformer&) = delete;
  Microformer(Microformer&&) noexcept;
  Microformer& operator=(Microformer&&) noexcept;
  ~Microformer();

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  PeftMethod method() const { return config_.peft_method; }

  /// Logits (len x vocab). Position t only sees tokens 0..t.
  Matrix forward(std::span<const int> tokens) const;

  /// Mean cross-entropy over positions whose target is not kIgnoreTarget.
  double loss(std::span<const int> tokens, std::span<const int> targets) const;

  /// Computes the loss and adds grad_weight * d(loss) to every unfrozen
  /// parameter's gradient. Frozen gradients are left untouched.
  double loss_and_backward(std::span<const int> tokens, std::span<const int> targets,
                           double grad_weight = 1.0);

  void zero_grad();

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  /// Freezes the base, injects adapters for `method` and initialises them so
  /// the model's outputs are unchanged. Throws ConfigError unless in full mode.
  void apply_peft(PeftMethod method, std::uint64_t seed);

  /// Re-draws adapter parameters (identity-at-init) from `seed`.
  void init_adapters(std::uint64_t seed);

  /// Folds every LoRA adapter into its base matrix and drops the adapters,
  /// returning the model to full mode. Throws ConfigError for other methods.
  void merge_lora();

  /// Closed-form trainable/total counts for the current method.
  ParamBudget count_params() const;

  std::size_t adapter_count() const;

  std::vector<double> flat_values() const;
  void set_flat_values(std::span<const double> values);

  /// Deep copy including adapters and freeze flags.
  Microformer clone() const;

  /// Access to the adapters of block `layer` (null when absent).
  LoraAdapter* lora_q(std::size_t layer);
  LoraAdapter* lora_v(std::size_t layer);
  CompacterAdapter* adapter_attn(std::size_t layer);
  CompacterAdapter* adapter_ffn(std::size_t layer);
  SharedKroneckerBank* bank();

  /// Greedy or temperature sampling. Sequences stop at `end_token` (excluded
  /// from the output) or after max_new tokens or at max_seq_len.
  struct Decode {
    bool greedy = true;
    double temperature = 1.0;
    std::uint64_t seed = 0;
  };
  std::vector<std::vector<int>> generate(std::span<const int> prompt, std::size_t max_new,
                                         const Decode& mode, std::size_t k,
                                         int end_token) const;

  struct Impl;

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<Impl> impl_;
};

/// Temperatures below this are treated as greedy decoding.
inline constexpr double kGreedyTemperature = 1e-6;

}  // namespace peftbench
