// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "peftbench/microformer.hpp"

namespace peftbench {

struct Block {
  Parameter ln1_g, ln1_b;
  Parameter wq, wk, wv, wo;
  Parameter ln2_g, ln2_b;
  Parameter w1, b1, w2, b2;
  std::optional<LoraAdapter> lora_q;
  std::optional<LoraAdapter> lora_v;
  std::optional<CompacterAdapter> ad_attn;
  std::optional<CompacterAdapter> ad_ffn;
};

struct Microformer::Impl {
  Parameter tok_emb, pos_emb;
  std::vector<Block> blocks;
  Parameter lnf_g, lnf_b;
  Parameter w_out, b_out;
  std::shared_ptr<SharedKroneckerBank> bank;
};

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> rstd;
};

struct AdapterCache {
  Matrix input;
  Matrix z;      // pre-activation of the down projection
  Matrix act;    // activation output, input of the up projection
};

struct BlockCache {
  Matrix x_in;
  LayerNormCache ln1;
  Matrix a1;
  Matrix q, k, v;
  Matrix q_low, v_low;        // a1 * lora_a, when LoRA is attached
  std::vector<Matrix> probs;  // per head, (T x T) lower triangular
  Matrix ctx;
  Matrix attn_out;
  AdapterCache ad1;
  Matrix x1;
  LayerNormCache ln2;
  Matrix a2;
  Matrix hid;
  Matrix gh;
  Matrix ffn_out;
  AdapterCache ad2;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Matrix x_final;
  LayerNormCache lnf;
  Matrix af;
};

inline constexpr double kLayerNormEps = 1e-5;

Matrix layer_norm(const Matrix& x, const Parameter& g, const Parameter& b,
                  LayerNormCache* cache);
Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, Parameter& g,
                           Parameter& b);

/// Runs the network; fills `cache` when non-null.
Matrix forward_impl(const ModelConfig& cfg, const Microformer::Impl& m,
                    std::span<const int> tokens, ForwardCache* cache);

/// Backpropagates dlogits through the cached forward pass.
void backward_impl(const ModelConfig& cfg, Microformer::Impl& m, std::span<const int> tokens,
                   const ForwardCache& cache, const Matrix& dlogits);

}  // namespace peftbench
