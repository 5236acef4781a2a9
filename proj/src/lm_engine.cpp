#include "lm_engine.hpp"

#include <cmath>
#include <cstring>

#include "kamir/errors.hpp"

namespace kamir::detail {

namespace {

// y[t] = W x[t]; W row-major [out x in].
void project(const float* w, const float* x, float* y, std::size_t t_count, std::size_t in,
             std::size_t out) {
  for (std::size_t t = 0; t < t_count; ++t) {
    const float* xt = x + t * in;
    float* yt = y + t * out;
    for (std::size_t o = 0; o < out; ++o) {
      const float* wr = w + o * in;
      float acc = 0.0f;
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xt[i];
      yt[o] = acc;
    }
  }
}

// dW += sum_t dy[t] (x) x[t]
void accum_weight_grad(float* dw, const float* dy, const float* x, std::size_t t_count,
                       std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < t_count; ++t) {
    const float* xt = x + t * in;
    const float* dyt = dy + t * out;
    for (std::size_t o = 0; o < out; ++o) {
      const float g = dyt[o];
      if (g == 0.0f) continue;
      float* dwr = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xt[i];
    }
  }
}

// dx[t] += W^T dy[t]
void accum_input_grad(const float* w, const float* dy, float* dx, std::size_t t_count,
                      std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < t_count; ++t) {
    const float* dyt = dy + t * out;
    float* dxt = dx + t * in;
    for (std::size_t o = 0; o < out; ++o) {
      const float g = dyt[o];
      if (g == 0.0f) continue;
      const float* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dxt[i] += g * wr[i];
    }
  }
}

// Per-position affine layer norm; keeps xhat and 1/std for the backward pass.
void layer_norm_fwd(const float* x, const float* gamma, const float* beta, float* xhat,
                    float* istd, float* y, std::size_t t_count, std::size_t d) {
  for (std::size_t t = 0; t < t_count; ++t) {
    const float* xt = x + t * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xt[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double dv = xt[i] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    const float is = static_cast<float>(1.0 / std::sqrt(var + 1e-5));
    istd[t] = is;
    float* xh = xhat + t * d;
    float* yt = y + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] = (xt[i] - static_cast<float>(mean)) * is;
      yt[i] = gamma[i] * xh[i] + beta[i];
    }
  }
}

// dx[t] += backward of the affine layer norm; also accumulates dgamma/dbeta.
void layer_norm_bwd(const float* dout, const float* gamma, const float* xhat, const float* istd,
                    float* dgamma, float* dbeta, float* dx, std::size_t t_count, std::size_t d) {
  for (std::size_t t = 0; t < t_count; ++t) {
    const float* dot_ = dout + t * d;
    const float* xh = xhat + t * d;
    float* dxt = dx + t * d;
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double dxh = static_cast<double>(dot_[i]) * gamma[i];
      m1 += dxh;
      m2 += dxh * xh[i];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      dgamma[i] += dot_[i] * xh[i];
      dbeta[i] += dot_[i];
      const double dxh = static_cast<double>(dot_[i]) * gamma[i];
      dxt[i] += static_cast<float>(istd[t] * (dxh - m1 - xh[i] * m2));
    }
  }
}

void resize_block(BlockActs& b, std::size_t T, std::size_t d, std::size_t ffn, std::size_t heads,
                  bool keep) {
  b.xhat1.assign(T * d, 0.0f);
  b.u.assign(T * d, 0.0f);
  b.istd1.assign(T, 0.0f);
  b.q.assign(T * d, 0.0f);
  b.k.assign(T * d, 0.0f);
  b.v.assign(T * d, 0.0f);
  b.attn_concat.assign(T * d, 0.0f);
  b.x_mid.assign(T * d, 0.0f);
  b.xhat2.assign(T * d, 0.0f);
  b.w.assign(T * d, 0.0f);
  b.istd2.assign(T, 0.0f);
  b.f1.assign(T * ffn, 0.0f);
  b.act.assign(T * ffn, 0.0f);
  b.att.assign(keep ? heads * T * T : 0, 0.0f);
}

}  // namespace

void proj_dims(const LmConfig& cfg, ProjKind kind, std::size_t& in, std::size_t& out) {
  const std::size_t d = cfg.hidden_dim, f = cfg.ffn_dim;
  switch (kind) {
    case ProjKind::q:
    case ProjKind::k:
    case ProjKind::v:
    case ProjKind::o:
      in = d;
      out = d;
      return;
    case ProjKind::ffn_in:
      in = d;
      out = f;
      return;
    case ProjKind::ffn_out:
      in = f;
      out = d;
      return;
  }
  throw InternalError("proj_dims: bad kind");
}

std::size_t proj_offset(const ParamLayout& layout, std::uint32_t block, ProjKind kind) {
  const BlockOffsets& b = layout.blocks.at(block);
  switch (kind) {
    case ProjKind::q: return b.wq;
    case ProjKind::k: return b.wk;
    case ProjKind::v: return b.wv;
    case ProjKind::o: return b.wo;
    case ProjKind::ffn_in: return b.w1;
    case ProjKind::ffn_out: return b.w2;
  }
  throw InternalError("proj_offset: bad kind");
}

void materialize_effective(std::span<const float> base, const LowRankPatch& patch, std::size_t in,
                           std::size_t out, std::span<float> dst) {
  KAMIR_CHECK(base.size() == in * out && dst.size() == in * out,
              "materialize_effective: shape mismatch");
  const std::size_t r = patch.rank;
  for (std::size_t o = 0; o < out; ++o) {
    const float* brow = patch.b + o * r;
    float* drow = dst.data() + o * in;
    const float* wrow = base.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      float acc = 0.0f;
      for (std::size_t j = 0; j < r; ++j) acc += brow[j] * patch.a[j * in + i];
      drow[i] = wrow[i] + patch.scale * acc;
    }
  }
}

namespace {

// Pointer to the weight actually used for (block, kind): the base matrix, or
// the materialized patched copy living in ws.weff.
const float* proj_weight(const MiniLmModel& m, const PatchSet* patches, Workspace& ws,
                         std::uint32_t block, ProjKind kind) {
  const std::size_t off = proj_offset(m.layout(), block, kind);
  if (patches == nullptr || !patches->at(block, kind).active())
    return m.params().data() + off;
  return ws.weff[block * kProjKindCount + static_cast<int>(kind)].data();
}

void materialize_patches(const MiniLmModel& m, const PatchSet* patches, Workspace& ws) {
  const std::uint32_t n = m.config().n_layers;
  ws.weff.assign(static_cast<std::size_t>(n) * kProjKindCount, {});
  if (patches == nullptr) return;
  KAMIR_CHECK(patches->n_blocks == n, "patch set does not match model depth");
  for (std::uint32_t b = 0; b < n; ++b) {
    for (int k = 0; k < kProjKindCount; ++k) {
      const LowRankPatch& p = patches->at(b, static_cast<ProjKind>(k));
      if (!p.active()) continue;
      std::size_t in = 0, out = 0;
      proj_dims(m.config(), static_cast<ProjKind>(k), in, out);
      auto& dst = ws.weff[b * kProjKindCount + k];
      dst.assign(in * out, 0.0f);
      const std::size_t off = proj_offset(m.layout(), b, static_cast<ProjKind>(k));
      materialize_effective(m.params().subspan(off, in * out), p, in, out, dst);
    }
  }
}

}  // namespace

void forward(const MiniLmModel& m, std::span<const TokenId> tokens, const PatchSet* patches,
             Workspace& ws, bool keep_activations) {
  const LmConfig& cfg = m.config();
  const std::size_t T = tokens.size();
  if (T == 0) throw DataError("forward: empty token sequence");
  if (T > cfg.max_seq_len)
    throw DataError("forward: sequence of " + std::to_string(T) +
                    " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::uint32_t>(t) >= cfg.vocab_size)
      throw DataError("forward: token id out of range: " + std::to_string(t));
  }

  const std::size_t d = cfg.hidden_dim, f = cfg.ffn_dim, V = cfg.vocab_size;
  const std::size_t heads = cfg.n_heads, hd = d / heads;
  const std::size_t N = cfg.n_layers;
  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));
  const float* P = m.params().data();
  const ParamLayout& L = m.layout();

  ws.T = T;
  ws.kept = keep_activations;
  ws.stream.assign(N + 1, std::vector<float>(T * d, 0.0f));
  ws.blocks.resize(N);
  for (auto& b : ws.blocks) resize_block(b, T, d, f, heads, keep_activations);
  ws.xhat_f.assign(T * d, 0.0f);
  ws.y_f.assign(T * d, 0.0f);
  ws.istd_f.assign(T, 0.0f);
  ws.logits.assign(T * V, 0.0f);
  materialize_patches(m, patches, ws);

  // Embeddings.
  for (std::size_t t = 0; t < T; ++t) {
    const float* te = P + L.tok_emb + static_cast<std::size_t>(tokens[t]) * d;
    const float* pe = P + L.pos_emb + t * d;
    float* x = ws.stream[0].data() + t * d;
    for (std::size_t i = 0; i < d; ++i) x[i] = te[i] + pe[i];
  }

  std::vector<float> att_row;  // scratch when activations are not kept

  for (std::size_t b = 0; b < N; ++b) {
    BlockActs& A = ws.blocks[b];
    const BlockOffsets& BO = L.blocks[b];
    const float* x_in = ws.stream[b].data();

    layer_norm_fwd(x_in, P + BO.ln1_gamma, P + BO.ln1_beta, A.xhat1.data(), A.istd1.data(),
                   A.u.data(), T, d);

    const std::uint32_t bu = static_cast<std::uint32_t>(b);
    project(proj_weight(m, patches, ws, bu, ProjKind::q), A.u.data(), A.q.data(), T, d, d);
    project(proj_weight(m, patches, ws, bu, ProjKind::k), A.u.data(), A.k.data(), T, d, d);
    project(proj_weight(m, patches, ws, bu, ProjKind::v), A.u.data(), A.v.data(), T, d, d);

    // Causal attention, one head at a time.
    if (!keep_activations) att_row.assign(T, 0.0f);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t hoff = h * hd;
      for (std::size_t t = 0; t < T; ++t) {
        float* row = keep_activations ? A.att.data() + (h * T + t) * T : att_row.data();
        const float* qt = A.q.data() + t * d + hoff;
        float mx = -1e30f;
        for (std::size_t s = 0; s <= t; ++s) {
          const float* ks = A.k.data() + s * d + hoff;
          float acc = 0.0f;
          for (std::size_t i = 0; i < hd; ++i) acc += qt[i] * ks[i];
          row[s] = acc * inv_sqrt_hd;
          if (row[s] > mx) mx = row[s];
        }
        double denom = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          row[s] = std::exp(row[s] - mx);
          denom += row[s];
        }
        const float inv = static_cast<float>(1.0 / denom);
        float* ot = A.attn_concat.data() + t * d + hoff;
        for (std::size_t i = 0; i < hd; ++i) ot[i] = 0.0f;
        for (std::size_t s = 0; s <= t; ++s) {
          row[s] *= inv;
          const float* vs = A.v.data() + s * d + hoff;
          const float p = row[s];
          for (std::size_t i = 0; i < hd; ++i) ot[i] += p * vs[i];
        }
      }
    }

    // Attention residual.
    {
      std::vector<float>& x_mid = A.x_mid;
      project(proj_weight(m, patches, ws, bu, ProjKind::o), A.attn_concat.data(), x_mid.data(), T,
              d, d);
      for (std::size_t i = 0; i < T * d; ++i) x_mid[i] += x_in[i];
    }

    layer_norm_fwd(A.x_mid.data(), P + BO.ln2_gamma, P + BO.ln2_beta, A.xhat2.data(),
                   A.istd2.data(), A.w.data(), T, d);

    project(proj_weight(m, patches, ws, bu, ProjKind::ffn_in), A.w.data(), A.f1.data(), T, d, f);
    for (std::size_t i = 0; i < T * f; ++i) A.act[i] = gelu(A.f1[i]);

    float* x_out = ws.stream[b + 1].data();
    project(proj_weight(m, patches, ws, bu, ProjKind::ffn_out), A.act.data(), x_out, T, f, d);
    for (std::size_t i = 0; i < T * d; ++i) x_out[i] += A.x_mid[i];
  }

  layer_norm_fwd(ws.stream[N].data(), P + L.final_ln_gamma, P + L.final_ln_beta, ws.xhat_f.data(),
                 ws.istd_f.data(), ws.y_f.data(), T, d);
  project(P + L.lm_head, ws.y_f.data(), ws.logits.data(), T, d, V);

  for (std::size_t i = 0; i < V; ++i) {
    if (!std::isfinite(ws.logits[(T - 1) * V + i]))
      throw InternalError("forward: non-finite logit");
  }
}

std::vector<std::vector<float>> read_trace(const MiniLmModel& m, const Workspace& ws,
                                           TraceAnchor anchor) {
  const std::size_t d = m.config().hidden_dim;
  const std::size_t N = m.config().n_layers;
  const std::size_t last = ws.T - 1;
  std::vector<std::vector<float>> states(N);
  for (std::size_t b = 1; b <= N; ++b) {
    const float* row = ws.stream[b].data() + last * d;
    states[b - 1].assign(row, row + d);
  }
  if (anchor == TraceAnchor::post_final_norm) {
    const float* row = ws.y_f.data() + last * d;
    states[N - 1].assign(row, row + d);
  }
  return states;
}

LossStats loss_and_grad(const MiniLmModel& m, std::span<const TokenId> tokens,
                        std::span<const std::uint8_t> target_mask, const PatchSet* patches,
                        std::span<float> grad_eff, bool want_entropy, Workspace& ws) {
  const LmConfig& cfg = m.config();
  const std::size_t T = tokens.size();
  if (target_mask.size() != T) throw DataError("loss_and_grad: mask/token length mismatch");
  if (T > 0 && target_mask[0] != 0)
    throw DataError("loss_and_grad: position 0 has no prefix and cannot be a target");
  std::size_t n_targets = 0;
  for (auto f : target_mask) n_targets += (f != 0);
  if (n_targets == 0) throw DataError("loss_and_grad: no target positions");

  const bool want_grad = !grad_eff.empty();
  if (want_grad)
    KAMIR_CHECK(grad_eff.size() == m.layout().total, "loss_and_grad: gradient size mismatch");

  forward(m, tokens, patches, ws, want_grad);

  const std::size_t d = cfg.hidden_dim, f = cfg.ffn_dim, V = cfg.vocab_size;
  const std::size_t heads = cfg.n_heads, hd = d / heads;
  const std::size_t N = cfg.n_layers;
  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));
  const float* P = m.params().data();
  const ParamLayout& L = m.layout();

  LossStats stats;
  stats.targets = n_targets;
  const double inv_n = 1.0 / static_cast<double>(n_targets);

  std::vector<float> dlogits;
  if (want_grad) dlogits.assign(T * V, 0.0f);

  for (std::size_t i = 1; i < T; ++i) {
    if (!target_mask[i]) continue;
    const std::size_t row = i - 1;
    const float* l = ws.logits.data() + row * V;
    const TokenId target = tokens[i];
    double mx = l[0];
    for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, static_cast<double>(l[v]));
    double sum = 0.0;
    for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(l[v]) - mx);
    const double lse = mx + std::log(sum);
    stats.loss += lse - l[target];
    if (want_entropy) {
      double pl = 0.0;
      for (std::size_t v = 0; v < V; ++v)
        pl += std::exp(static_cast<double>(l[v]) - lse) * l[v];
      stats.entropy += lse - pl;
    }
    if (want_grad) {
      float* dl = dlogits.data() + row * V;
      for (std::size_t v = 0; v < V; ++v)
        dl[v] = static_cast<float>(std::exp(static_cast<double>(l[v]) - lse) * inv_n);
      dl[target] -= static_cast<float>(inv_n);
    }
  }
  stats.loss *= inv_n;
  stats.entropy *= inv_n;
  if (!std::isfinite(stats.loss)) throw InternalError("loss_and_grad: non-finite loss");

  if (!want_grad) return stats;

  float* G = grad_eff.data();

  // LM head and final norm.
  std::vector<float> dy(T * d, 0.0f);
  accum_weight_grad(G + L.lm_head, dlogits.data(), ws.y_f.data(), T, d, V);
  accum_input_grad(P + L.lm_head, dlogits.data(), dy.data(), T, d, V);

  std::vector<float> dx(T * d, 0.0f);
  layer_norm_bwd(dy.data(), P + L.final_ln_gamma, ws.xhat_f.data(), ws.istd_f.data(),
                 G + L.final_ln_gamma, G + L.final_ln_beta, dx.data(), T, d);

  std::vector<float> da(T * f), df1(T * f), dw(T * d), dmid(T * d), dconcat(T * d), dq(T * d),
      dk(T * d), dv(T * d), du(T * d), dprev(T * d);

  for (std::size_t bi = N; bi-- > 0;) {
    const BlockActs& A = ws.blocks[bi];
    const BlockOffsets& BO = L.blocks[bi];
    const std::uint32_t bu = static_cast<std::uint32_t>(bi);

    // FFN: x_out = x_mid + W2 gelu(W1 w)
    std::fill(da.begin(), da.end(), 0.0f);
    accum_weight_grad(G + BO.w2, dx.data(), A.act.data(), T, f, d);
    accum_input_grad(proj_weight(m, patches, ws, bu, ProjKind::ffn_out), dx.data(), da.data(), T,
                     f, d);
    for (std::size_t i = 0; i < T * f; ++i) df1[i] = da[i] * gelu_grad(A.f1[i]);
    std::fill(dw.begin(), dw.end(), 0.0f);
    accum_weight_grad(G + BO.w1, df1.data(), A.w.data(), T, d, f);
    accum_input_grad(proj_weight(m, patches, ws, bu, ProjKind::ffn_in), df1.data(), dw.data(), T,
                     d, f);

    std::copy(dx.begin(), dx.end(), dmid.begin());  // residual path
    layer_norm_bwd(dw.data(), P + BO.ln2_gamma, A.xhat2.data(), A.istd2.data(), G + BO.ln2_gamma,
                   G + BO.ln2_beta, dmid.data(), T, d);

    // Attention: x_mid = x_in + Wo concat(heads)
    std::fill(dconcat.begin(), dconcat.end(), 0.0f);
    accum_weight_grad(G + BO.wo, dmid.data(), A.attn_concat.data(), T, d, d);
    accum_input_grad(proj_weight(m, patches, ws, bu, ProjKind::o), dmid.data(), dconcat.data(), T,
                     d, d);

    std::fill(dq.begin(), dq.end(), 0.0f);
    std::fill(dk.begin(), dk.end(), 0.0f);
    std::fill(dv.begin(), dv.end(), 0.0f);
    std::vector<float> dp_row(T);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t hoff = h * hd;
      for (std::size_t t = 0; t < T; ++t) {
        const float* att_row = A.att.data() + (h * T + t) * T;
        const float* do_t = dconcat.data() + t * d + hoff;
        double pp = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          const float* vs = A.v.data() + s * d + hoff;
          float acc = 0.0f;
          for (std::size_t i = 0; i < hd; ++i) acc += do_t[i] * vs[i];
          dp_row[s] = acc;
          pp += static_cast<double>(acc) * att_row[s];
          float* dvs = dv.data() + s * d + hoff;
          const float p = att_row[s];
          for (std::size_t i = 0; i < hd; ++i) dvs[i] += p * do_t[i];
        }
        const float* qt = A.q.data() + t * d + hoff;
        float* dqt = dq.data() + t * d + hoff;
        for (std::size_t s = 0; s <= t; ++s) {
          const float dscore =
              att_row[s] * (dp_row[s] - static_cast<float>(pp)) * inv_sqrt_hd;
          if (dscore == 0.0f) continue;
          const float* ks = A.k.data() + s * d + hoff;
          float* dks = dk.data() + s * d + hoff;
          for (std::size_t i = 0; i < hd; ++i) {
            dqt[i] += dscore * ks[i];
            dks[i] += dscore * qt[i];
          }
        }
      }
    }

    accum_weight_grad(G + BO.wq, dq.data(), A.u.data(), T, d, d);
    accum_weight_grad(G + BO.wk, dk.data(), A.u.data(), T, d, d);
    accum_weight_grad(G + BO.wv, dv.data(), A.u.data(), T, d, d);
    std::fill(du.begin(), du.end(), 0.0f);
    accum_input_grad(proj_weight(m, patches, ws, bu, ProjKind::q), dq.data(), du.data(), T, d, d);
    accum_input_grad(proj_weight(m, patches, ws, bu, ProjKind::k), dk.data(), du.data(), T, d, d);
    accum_input_grad(proj_weight(m, patches, ws, bu, ProjKind::v), dv.data(), du.data(), T, d, d);

    std::copy(dmid.begin(), dmid.end(), dprev.begin());  // residual path
    layer_norm_bwd(du.data(), P + BO.ln1_gamma, A.xhat1.data(), A.istd1.data(), G + BO.ln1_gamma,
                   G + BO.ln1_beta, dprev.data(), T, d);
    std::swap(dx, dprev);
  }

  // Embeddings.
  for (std::size_t t = 0; t < T; ++t) {
    const float* g = dx.data() + t * d;
    float* te = G + L.tok_emb + static_cast<std::size_t>(tokens[t]) * d;
    float* pe = G + L.pos_emb + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      te[i] += g[i];
      pe[i] += g[i];
    }
  }

  return stats;
}

}  // namespace kamir::detail
