// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "impl.hpp"
#include "peftbench/error.hpp"

namespace peftbench {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_ff == 0 || max_seq_len == 0) {
    fail("layer, head, width and length settings must be positive");
  }
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (d_model % n_heads != 0) {
    fail("d_model=" + std::to_string(d_model) + " is not divisible by n_heads=" +
         std::to_string(n_heads));
  }
  if (lora_rank == 0) fail("lora_rank must be positive");
  if (lora_scaling && !std::isfinite(*lora_scaling)) fail("lora_scaling must be finite");
  if (compacter_n == 0) fail("compacter_n must be positive");
  if (peft_method == PeftMethod::compacter) {
    if (d_model % compacter_n != 0) {
      fail("d_model=" + std::to_string(d_model) + " is not divisible by compacter_n=" +
           std::to_string(compacter_n));
    }
    const std::size_t b = resolved_bottleneck();
    if (b % compacter_n != 0) {
      fail("bottleneck=" + std::to_string(b) + " is not divisible by compacter_n=" +
           std::to_string(compacter_n));
    }
  }
}

std::size_t ModelConfig::resolved_bottleneck() const {
  return bottleneck != 0 ? bottleneck : default_bottleneck(d_model, compacter_n);
}

// ---------------------------------------------------------------------------
// Construction

Microformer::Microformer(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), impl_(std::make_unique<Impl>()) {
  const PeftMethod requested = config_.peft_method;
  config_.peft_method = PeftMethod::full;
  config_.validate();

  SeededRng rng(seed);
  const std::size_t d = config_.d_model;
  const std::size_t f = config_.d_ff;
  const double s = config_.init_std;
  const double head_s = config_.head_init_std > 0.0
                            ? config_.head_init_std
                            : 1.0 / std::sqrt(static_cast<double>(d));
  Impl& m = *impl_;
  m.tok_emb = Parameter("tok_emb", rng.gaussian_matrix(config_.vocab_size, d, s));
  m.pos_emb = Parameter("pos_emb", rng.gaussian_matrix(config_.max_seq_len, d, s));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b;
    b.ln1_g = Parameter(p + "ln1.g", Matrix(1, d, 1.0));
    b.ln1_b = Parameter(p + "ln1.b", Matrix(1, d));
    b.wq = Parameter(p + "wq", rng.gaussian_matrix(d, d, s));
    b.wk = Parameter(p + "wk", rng.gaussian_matrix(d, d, s));
    b.wv = Parameter(p + "wv", rng.gaussian_matrix(d, d, s));
    b.wo = Parameter(p + "wo", rng.gaussian_matrix(d, d, s));
    b.ln2_g = Parameter(p + "ln2.g", Matrix(1, d, 1.0));
    b.ln2_b = Parameter(p + "ln2.b", Matrix(1, d));
    b.w1 = Parameter(p + "w1", rng.gaussian_matrix(d, f, s));
    b.b1 = Parameter(p + "b1", Matrix(1, f));
    b.w2 = Parameter(p + "w2", rng.gaussian_matrix(f, d, s));
    b.b2 = Parameter(p + "b2", Matrix(1, d));
    m.blocks.push_back(std::move(b));
  }
  m.lnf_g = Parameter("ln_f.g", Matrix(1, d, 1.0));
  m.lnf_b = Parameter("ln_f.b", Matrix(1, d));
  m.w_out = Parameter("w_out", rng.gaussian_matrix(d, config_.vocab_size, head_s));
  m.b_out = Parameter("b_out", Matrix(1, config_.vocab_size));

  if (requested != PeftMethod::full) apply_peft(requested, derive_seed(seed, 1));
}

Microformer::Microformer(Microformer&&) noexcept = default;
Microformer& Microformer::operator=(Microformer&&) noexcept = default;
Microformer::~Microformer() = default;

// ---------------------------------------------------------------------------
// Forward

Matrix layer_norm(const Matrix& x, const Parameter& g, const Parameter& b,
                  LayerNormCache* cache) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Matrix xhat(n, d);
  std::vector<double> rstd(n);
  Matrix y(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (x(i, j) - mean) * rstd[i];
      y(i, j) = xhat(i, j) * g.value(0, j) + b.value(0, j);
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

namespace {

Matrix project(const Matrix& x, const Parameter& w, const std::optional<LoraAdapter>& ad,
               Matrix* low_out) {
  Matrix y = matmul(x, w.value);
  if (ad) {
    Matrix low = matmul(x, ad->w_a.value);
    axpy_inplace(y, matmul(low, ad->w_b.value), ad->scaling);
    if (low_out) *low_out = std::move(low);
  }
  return y;
}

Matrix adapter_forward(const Matrix& h, const std::optional<CompacterAdapter>& ad,
                       AdapterCache* cache) {
  if (!ad) return h;
  Matrix z = phm_forward(h, ad->down);
  Matrix act = apply_activation(z, ad->activation);
  Matrix out = phm_forward(act, ad->up);
  axpy_inplace(out, h);
  if (cache) {
    cache->input = h;
    cache->z = std::move(z);
    cache->act = std::move(act);
  }
  return out;
}

// Causal multi-head attention on already projected q, k, v.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t n_heads,
                 std::vector<Matrix>* probs_out) {
  const std::size_t t_len = q.rows();
  const std::size_t d = q.cols();
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix ctx(t_len, d);
  if (probs_out) probs_out->assign(n_heads, Matrix());
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    Matrix p(t_len, t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s <= t; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dh; ++j) acc += q(t, off + j) * k(s, off + j);
        p(t, s) = acc * inv_sqrt;
        mx = std::max(mx, p(t, s));
      }
      double z = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        p(t, s) = std::exp(p(t, s) - mx);
        z += p(t, s);
      }
      for (std::size_t s = 0; s <= t; ++s) p(t, s) /= z;
      for (std::size_t s = 0; s <= t; ++s) {
        const double w = p(t, s);
        for (std::size_t j = 0; j < dh; ++j) ctx(t, off + j) += w * v(s, off + j);
      }
    }
    if (probs_out) (*probs_out)[h] = std::move(p);
  }
  return ctx;
}

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens) {
  if (tokens.empty()) throw ShapeError("forward: empty token sequence");
  if (tokens.size() > cfg.max_seq_len) {
    throw ShapeError("forward: sequence length " + std::to_string(tokens.size()) +
                     " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg.vocab_size) {
      throw ShapeError("forward: token id " + std::to_string(tokens[i]) + " at position " +
                       std::to_string(i) + " outside vocabulary of size " +
                       std::to_string(cfg.vocab_size));
    }
  }
}

}  // namespace

Matrix forward_impl(const ModelConfig& cfg, const Microformer::Impl& m,
                    std::span<const int> tokens, ForwardCache* cache) {
  check_tokens(cfg, tokens);
  const std::size_t t_len = tokens.size();
  const std::size_t d = cfg.d_model;
  Matrix x(t_len, d);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < d; ++j)
      x(t, j) = m.tok_emb.value(static_cast<std::size_t>(tokens[t]), j) + m.pos_emb.value(t, j);

  if (cache) cache->blocks.assign(m.blocks.size(), BlockCache{});
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const Block& b = m.blocks[l];
    BlockCache* bc = cache ? &cache->blocks[l] : nullptr;
    if (bc) bc->x_in = x;

    Matrix a1 = layer_norm(x, b.ln1_g, b.ln1_b, bc ? &bc->ln1 : nullptr);
    Matrix q = project(a1, b.wq, b.lora_q, bc ? &bc->q_low : nullptr);
    Matrix k = matmul(a1, b.wk.value);
    Matrix v = project(a1, b.wv, b.lora_v, bc ? &bc->v_low : nullptr);
    Matrix ctx = attention(q, k, v, cfg.n_heads, bc ? &bc->probs : nullptr);
    Matrix attn_out = matmul(ctx, b.wo.value);
    Matrix out1 = adapter_forward(attn_out, b.ad_attn, bc ? &bc->ad1 : nullptr);
    Matrix x1 = add(x, out1);

    Matrix a2 = layer_norm(x1, b.ln2_g, b.ln2_b, bc ? &bc->ln2 : nullptr);
    Matrix hid = matmul(a2, b.w1.value);
    add_row_inplace(hid, b.b1.value);
    Matrix gh = apply_activation(hid, Activation::gelu);
    Matrix ffn_out = matmul(gh, b.w2.value);
    add_row_inplace(ffn_out, b.b2.value);
    Matrix out2 = adapter_forward(ffn_out, b.ad_ffn, bc ? &bc->ad2 : nullptr);
    Matrix x2 = add(x1, out2);

    if (bc) {
      bc->a1 = std::move(a1);
      bc->q = std::move(q);
      bc->k = std::move(k);
      bc->v = std::move(v);
      bc->ctx = std::move(ctx);
      bc->attn_out = std::move(attn_out);
      bc->x1 = std::move(x1);
      bc->a2 = std::move(a2);
      bc->hid = std::move(hid);
      bc->gh = std::move(gh);
      bc->ffn_out = std::move(ffn_out);
    }
    x = std::move(x2);
  }

  Matrix af = layer_norm(x, m.lnf_g, m.lnf_b, cache ? &cache->lnf : nullptr);
  Matrix logits = matmul(af, m.w_out.value);
  add_row_inplace(logits, m.b_out.value);
  if (cache) {
    cache->x_final = std::move(x);
    cache->af = std::move(af);
  }
  return logits;
}

Matrix Microformer::forward(std::span<const int> tokens) const {
  return forward_impl(config_, *impl_, tokens, nullptr);
}

namespace {

// Returns mean loss and writes d(mean loss)/d(logits) into dlogits when given.
double cross_entropy(const Matrix& logits, std::span<const int> targets, Matrix* dlogits) {
  if (targets.size() != logits.rows()) {
    throw ShapeError("loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " positions");
  }
  std::size_t count = 0;
  for (int y : targets) {
    if (y == kIgnoreTarget) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw ShapeError("loss: target id " + std::to_string(y) + " outside vocabulary");
    }
    ++count;
  }
  if (dlogits) *dlogits = Matrix(logits.rows(), logits.cols());
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    if (targets[t] == kIgnoreTarget) continue;
    auto row = logits.row_span(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    const auto y = static_cast<std::size_t>(targets[t]);
    total += lse - row[y];
    if (dlogits) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        (*dlogits)(t, j) = std::exp(row[j] - lse) * inv;
      }
      (*dlogits)(t, y) -= inv;
    }
  }
  return total * inv;
}

}  // namespace

double Microformer::loss(std::span<const int> tokens, std::span<const int> targets) const {
  if (tokens.size() != targets.size()) {
    throw ShapeError("loss: tokens and targets differ in length");
  }
  return cross_entropy(forward(tokens), targets, nullptr);
}

double Microformer::loss_and_backward(std::span<const int> tokens,
                                      std::span<const int> targets, double grad_weight) {
  if (tokens.size() != targets.size()) {
    throw ShapeError("loss_and_backward: tokens (" + std::to_string(tokens.size()) +
                     ") and targets (" + std::to_string(targets.size()) + ") differ in length");
  }
  ForwardCache cache;
  const Matrix logits = forward_impl(config_, *impl_, tokens, &cache);
  Matrix dlogits;
  const double value = cross_entropy(logits, targets, &dlogits);
  if (grad_weight != 1.0) dlogits = scale(dlogits, grad_weight);
  backward_impl(config_, *impl_, tokens, cache, dlogits);
  return value;
}

void Microformer::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Parameter enumeration

namespace {

template <class Self, class Out>
void collect(Self& m, Out& out) {
  out.push_back(&m.tok_emb);
  out.push_back(&m.pos_emb);
  for (auto& b : m.blocks) {
    for (auto* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_g, &b.ln2_b, &b.w1,
                    &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  for (auto* p : {&m.lnf_g, &m.lnf_b, &m.w_out, &m.b_out}) out.push_back(p);
  for (auto& b : m.blocks) {
    for (auto* ad : {&b.lora_q, &b.lora_v}) {
      if (*ad) {
        out.push_back(&(*ad)->w_a);
        out.push_back(&(*ad)->w_b);
      }
    }
  }
  if (m.bank) {
    for (auto& a : m.bank->a_mats) out.push_back(&a);
  }
  for (auto& b : m.blocks) {
    for (auto* ad : {&b.ad_attn, &b.ad_ffn}) {
      if (!*ad) continue;
      for (auto* layer : {&(*ad)->down, &(*ad)->up}) {
        for (auto& p : layer->b_down) out.push_back(&p);
        for (auto& p : layer->b_up) out.push_back(&p);
        out.push_back(&layer->bias);
      }
    }
  }
}

}  // namespace

std::vector<Parameter*> Microformer::parameters() {
  std::vector<Parameter*> out;
  collect(*impl_, out);
  return out;
}

std::vector<const Parameter*> Microformer::parameters() const {
  std::vector<const Parameter*> out;
  collect(*impl_, out);
  return out;
}

// ---------------------------------------------------------------------------
// PEFT

void Microformer::apply_peft(PeftMethod method, std::uint64_t seed) {
  if (config_.peft_method != PeftMethod::full) {
    throw ConfigError("apply_peft: model already carries " +
                      std::string(to_string(config_.peft_method)) + " adapters");
  }
  if (method == PeftMethod::full) return;
  ModelConfig next = config_;
  next.peft_method = method;
  next.validate();

  for (Parameter* p : parameters()) p->frozen = true;
  Impl& m = *impl_;
  const std::size_t d = config_.d_model;
  if (method == PeftMethod::lora) {
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
      const std::string p = "block" + std::to_string(l);
      m.blocks[l].lora_q.emplace(d, d, config_.lora_rank, p + ".q", config_.lora_scaling);
      m.blocks[l].lora_v.emplace(d, d, config_.lora_rank, p + ".v", config_.lora_scaling);
    }
  } else {
    m.bank = std::make_shared<SharedKroneckerBank>(config_.compacter_n, "bank");
    const std::size_t bottleneck = next.resolved_bottleneck();
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
      const std::string p = "block" + std::to_string(l);
      m.blocks[l].ad_attn.emplace(m.bank, d, bottleneck, config_.phm_rank, p + ".adapter_attn",
                                  config_.adapter_activation);
      m.blocks[l].ad_ffn.emplace(m.bank, d, bottleneck, config_.phm_rank, p + ".adapter_ffn",
                                 config_.adapter_activation);
    }
  }
  config_ = next;
  init_adapters(seed);
}

void Microformer::init_adapters(std::uint64_t seed) {
  SeededRng rng(seed);
  Impl& m = *impl_;
  const double s = config_.adapter_init_std;
  if (m.bank) init_bank(*m.bank, rng, s);
  for (auto& b : m.blocks) {
    if (b.lora_q) init_lora(*b.lora_q, rng, s);
    if (b.lora_v) init_lora(*b.lora_v, rng, s);
    if (b.ad_attn) init_compacter(*b.ad_attn, rng, s);
    if (b.ad_ffn) init_compacter(*b.ad_ffn, rng, s);
  }
}

void Microformer::merge_lora() {
  if (config_.peft_method != PeftMethod::lora) {
    throw ConfigError("merge is defined for LoRA adapters only; model method is " +
                      std::string(to_string(config_.peft_method)));
  }
  for (auto& b : impl_->blocks) {
    b.wq.value = lora_merge(b.wq.value, *b.lora_q);
    b.wv.value = lora_merge(b.wv.value, *b.lora_v);
    b.lora_q.reset();
    b.lora_v.reset();
  }
  config_.peft_method = PeftMethod::full;
  for (Parameter* p : parameters()) p->frozen = false;
}

ParamBudget Microformer::count_params() const {
  const ModelConfig& c = config_;
  const std::size_t d = c.d_model;
  const std::size_t v = c.vocab_size;
  const std::size_t per_block = 2 * d + 4 * d * d + 2 * d + d * c.d_ff + c.d_ff + c.d_ff * d + d;
  const std::size_t base = v * d + c.max_seq_len * d + c.n_layers * per_block + 2 * d + d * v + v;
  std::size_t adapters = 0;
  switch (c.peft_method) {
    case PeftMethod::full:
      return make_budget(base, base);
    case PeftMethod::lora:
      // q and v projections per block, r(in + out) each.
      adapters = c.n_layers * 2 * c.lora_rank * (d + d);
      break;
    case PeftMethod::compacter: {
      const std::size_t b = c.resolved_bottleneck();
      const std::size_t per_phm_pair = c.phm_rank * (d + b) + b + c.phm_rank * (b + d) + d;
      adapters = c.compacter_n * c.compacter_n * c.compacter_n +
                 c.n_layers * 2 * per_phm_pair;
      break;
    }
  }
  return make_budget(adapters, base + adapters);
}

std::size_t Microformer::adapter_count() const {
  std::size_t n = 0;
  for (const auto& b : impl_->blocks) {
    n += b.lora_q.has_value() + b.lora_v.has_value() + b.ad_attn.has_value() +
         b.ad_ffn.has_value();
  }
  return n;
}

std::vector<double> Microformer::flat_values() const {
  std::vector<double> out;
  for (const Parameter* p : parameters()) {
    auto d = p->value.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

void Microformer::set_flat_values(std::span<const double> values) {
  std::size_t total = 0;
  for (const Parameter* p : parameters()) total += p->size();
  if (values.size() != total) {
    throw ShapeError("set_flat_values: expected " + std::to_string(total) + " values, got " +
                     std::to_string(values.size()));
  }
  std::size_t off = 0;
  for (Parameter* p : parameters()) {
    auto d = p->value.data();
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
              values.begin() + static_cast<std::ptrdiff_t>(off + d.size()), d.begin());
    off += d.size();
  }
}

Microformer Microformer::clone() const {
  ModelConfig base_cfg = config_;
  base_cfg.peft_method = PeftMethod::full;
  Microformer copy(base_cfg, seed_);
  if (config_.peft_method != PeftMethod::full) copy.apply_peft(config_.peft_method, 0);
  copy.set_flat_values(flat_values());
  auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->frozen = src[i]->frozen;
  return copy;
}

LoraAdapter* Microformer::lora_q(std::size_t layer) {
  auto& ad = impl_->blocks.at(layer).lora_q;
  return ad ? &*ad : nullptr;
}
LoraAdapter* Microformer::lora_v(std::size_t layer) {
  auto& ad = impl_->blocks.at(layer).lora_v;
  return ad ? &*ad : nullptr;
}
CompacterAdapter* Microformer::adapter_attn(std::size_t layer) {
  auto& ad = impl_->blocks.at(layer).ad_attn;
  return ad ? &*ad : nullptr;
}
CompacterAdapter* Microformer::adapter_ffn(std::size_t layer) {
  auto& ad = impl_->blocks.at(layer).ad_ffn;
  return ad ? &*ad : nullptr;
}
SharedKroneckerBank* Microformer::bank() { return impl_->bank.get(); }

}  // namespace peftbench
