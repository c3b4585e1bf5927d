// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "impl.hpp"

namespace peftbench {

namespace {

void accumulate(Parameter& p, const Matrix& g) {
  if (!p.frozen) axpy_inplace(p.grad, g);
}

}  // namespace

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, Parameter& g,
                           Parameter& b) {
  const std::size_t n = dy.rows();
  const std::size_t d = dy.cols();
  if (!g.frozen || !b.frozen) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        if (!g.frozen) g.grad(0, j) += dy(i, j) * cache.xhat(i, j);
        if (!b.frozen) b.grad(0, j) += dy(i, j);
      }
  }
  Matrix dx(n, d);
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxhat = dy(i, j) * g.value(0, j);
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * cache.xhat(i, j);
    }
    mean_dxhat *= inv_d;
    mean_dxhat_xhat *= inv_d;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxhat = dy(i, j) * g.value(0, j);
      dx(i, j) = cache.rstd[i] * (dxhat - mean_dxhat - cache.xhat(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

namespace {

// y = x W (+ scaling * (x A) B). Returns dx.
Matrix project_backward(const Matrix& x, const Matrix& dy, Parameter& w,
                        std::optional<LoraAdapter>& ad, const Matrix& low) {
  accumulate(w, matmul_tn(x, dy));
  Matrix dx = matmul_nt(dy, w.value);
  if (ad) {
    if (!ad->w_b.frozen) axpy_inplace(ad->w_b.grad, matmul_tn(low, dy), ad->scaling);
    const Matrix dlow = scale(matmul_nt(dy, ad->w_b.value), ad->scaling);
    accumulate(ad->w_a, matmul_tn(x, dlow));
    axpy_inplace(dx, matmul_nt(dlow, ad->w_a.value));
  }
  return dx;
}

// out = h + up(act(down(h))). Returns dh.
Matrix adapter_backward(const Matrix& dout, std::optional<CompacterAdapter>& ad,
                        const AdapterCache& cache) {
  if (!ad) return dout;
  const Matrix dact = phm_backward(ad->up, cache.act, dout);
  const Matrix dz = activation_backward(cache.z, dact, ad->activation);
  Matrix dh = phm_backward(ad->down, cache.input, dz);
  axpy_inplace(dh, dout);
  return dh;
}

void attention_backward(const BlockCache& c, const Matrix& dctx, std::size_t n_heads,
                        Matrix& dq, Matrix& dk, Matrix& dv) {
  const std::size_t t_len = c.q.rows();
  const std::size_t d = c.q.cols();
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Matrix(t_len, d);
  dk = Matrix(t_len, d);
  dv = Matrix(t_len, d);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    const Matrix& p = c.probs[h];
    for (std::size_t t = 0; t < t_len; ++t) {
      // dP(t, s) = dctx_t . v_s ; dv_s += P(t, s) dctx_t
      std::vector<double> dp(t + 1);
      double dot = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dh; ++j) {
          acc += dctx(t, off + j) * c.v(s, off + j);
          dv(s, off + j) += p(t, s) * dctx(t, off + j);
        }
        dp[s] = acc;
        dot += acc * p(t, s);
      }
      for (std::size_t s = 0; s <= t; ++s) {
        const double ds = p(t, s) * (dp[s] - dot) * inv_sqrt;
        if (ds == 0.0) continue;
        for (std::size_t j = 0; j < dh; ++j) {
          dq(t, off + j) += ds * c.k(s, off + j);
          dk(s, off + j) += ds * c.q(t, off + j);
        }
      }
    }
  }
}

}  // namespace

void backward_impl(const ModelConfig& cfg, Microformer::Impl& m, std::span<const int> tokens,
                   const ForwardCache& cache, const Matrix& dlogits) {
  accumulate(m.w_out, matmul_tn(cache.af, dlogits));
  if (!m.b_out.frozen) axpy_inplace(m.b_out.grad, column_sums(dlogits));
  Matrix dx = layer_norm_backward(matmul_nt(dlogits, m.w_out.value), cache.lnf, m.lnf_g,
                                  m.lnf_b);

  for (std::size_t li = m.blocks.size(); li-- > 0;) {
    Block& b = m.blocks[li];
    const BlockCache& c = cache.blocks[li];

    // x2 = x1 + adapter(ffn(ln2(x1)))
    const Matrix dffn = adapter_backward(dx, b.ad_ffn, c.ad2);
    accumulate(b.w2, matmul_tn(c.gh, dffn));
    if (!b.b2.frozen) axpy_inplace(b.b2.grad, column_sums(dffn));
    const Matrix dhid = activation_backward(c.hid, matmul_nt(dffn, b.w2.value), Activation::gelu);
    accumulate(b.w1, matmul_tn(c.a2, dhid));
    if (!b.b1.frozen) axpy_inplace(b.b1.grad, column_sums(dhid));
    const Matrix da2 = matmul_nt(dhid, b.w1.value);
    Matrix dx1 = dx;
    axpy_inplace(dx1, layer_norm_backward(da2, c.ln2, b.ln2_g, b.ln2_b));

    // x1 = x + adapter(attn(ln1(x)))
    const Matrix dattn = adapter_backward(dx1, b.ad_attn, c.ad1);
    accumulate(b.wo, matmul_tn(c.ctx, dattn));
    const Matrix dctx = matmul_nt(dattn, b.wo.value);
    Matrix dq, dk, dv;
    attention_backward(c, dctx, cfg.n_heads, dq, dk, dv);
    Matrix da1 = project_backward(c.a1, dq, b.wq, b.lora_q, c.q_low);
    accumulate(b.wk, matmul_tn(c.a1, dk));
    axpy_inplace(da1, matmul_nt(dk, b.wk.value));
    axpy_inplace(da1, project_backward(c.a1, dv, b.wv, b.lora_v, c.v_low));

    Matrix dx0 = dx1;
    axpy_inplace(dx0, layer_norm_backward(da1, c.ln1, b.ln1_g, b.ln1_b));
    dx = std::move(dx0);
  }

  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto id = static_cast<std::size_t>(tokens[t]);
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      if (!m.tok_emb.frozen) m.tok_emb.grad(id, j) += dx(t, j);
      if (!m.pos_emb.frozen) m.pos_emb.grad(t, j) += dx(t, j);
    }
  }
}

}  // namespace peftbench
