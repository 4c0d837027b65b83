#pragma once

// Implementation detail of vit.hpp; do not include directly.

#include <algorithm>
#include <cmath>

namespace evostack::nn {

template <class T>
struct VitModel<T>::Trace {
  std::size_t n = 0;
  std::vector<T> patches;  // (n*S, patch_dim)

  struct Block {
    std::vector<T> x_in;      // tokens entering the block (R, E)
    std::vector<T> ln1_out;   // (R, E)
    LayerNormStats ln1_stats;
    std::vector<T> q, k, v;   // (R, E)
    std::vector<T> attn;      // (n*heads, S1*S1) softmax probs
    std::vector<T> ctx;       // (R, E)
    std::vector<T> attn_mask;  // dropout mask, empty when inactive
    std::vector<T> x_mid;     // after attention residual (R, E)
    std::vector<T> ln2_out;   // (R, E)
    LayerNormStats ln2_stats;
    std::vector<T> f1;        // (R, m) pre-activation
    std::vector<T> g;         // gelu(f1)
    std::vector<T> ff_mask;   // dropout mask, empty when inactive
    std::vector<T> x_out;     // (R, E)
  };
  std::vector<Block> blocks;

  LayerNormStats fln_stats;
  std::vector<T> fln_in;    // alias of last x_out (kept by value for clarity)
  std::vector<T> fln_out;   // (R, E)
  std::vector<T> cls_rows;  // (n, E)
  std::vector<T> pr;        // (n, hidden) pre-activation
  std::vector<T> pa;        // gelu(pr)
  std::vector<T> logits;    // (n, out)
};

template <class T>
int VitModel<T>::add_param(const std::string& name, int group,
                           std::vector<std::size_t> shape, double init_scale,
                           RngStream& rng) {
  Param<T> p;
  p.name = name;
  p.group = group;
  p.shape = std::move(shape);
  std::size_t total = 1;
  for (auto s : p.shape) total *= s;
  p.value.resize(total);
  if (init_scale > 0.0) {
    for (auto& v : p.value)
      v = static_cast<T>(rng.uniform_real(-init_scale, init_scale));
  } else if (init_scale < 0.0) {  // layernorm gain
    std::fill(p.value.begin(), p.value.end(), T(1));
  }
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size() - 1);
}

template <class T>
VitModel<T>::VitModel(Chromosome arch, FixedHyperparams fixed,
                      HeadDescriptor head, RngStream& init_rng)
    : arch_(std::move(arch)), fixed_(fixed), head_(head) {
  head_.validate();
  if (arch_.length() < 1)
    throw ValidationError("architecture needs at least one layer");
  if (fixed_.image_size % fixed_.patch_size != 0)
    throw ValidationError("patch_size must divide image_size");
  for (const auto& gene : arch_.layers) {
    if (gene.heads < 1 || fixed_.embed_dim % gene.heads != 0)
      throw ValidationError("embed_dim " + std::to_string(fixed_.embed_dim) +
                            " not divisible by head count " +
                            std::to_string(gene.heads));
    if (gene.mlp_dim < 1)
      throw ValidationError("mlp_dim must be positive");
    if (gene.dropout < 0.0 || gene.dropout >= 1.0)
      throw ValidationError("dropout must be in [0, 1)");
  }

  const int grid = fixed_.image_size / fixed_.patch_size;
  patches_ = grid * grid;
  seq_len_ = patches_ + 1;
  patch_dim_ = fixed_.channels * fixed_.patch_size * fixed_.patch_size;

  const std::size_t e = static_cast<std::size_t>(fixed_.embed_dim);
  const std::size_t pd = static_cast<std::size_t>(patch_dim_);
  const std::size_t hid = static_cast<std::size_t>(fixed_.hidden_dim);
  const std::size_t out = static_cast<std::size_t>(head_.width);
  const double e_scale = 1.0 / std::sqrt(static_cast<double>(e));

  patch_w_ = add_param("patch_embed.weight", 0, {pd, e},
                       1.0 / std::sqrt(static_cast<double>(pd)), init_rng);
  patch_b_ = add_param("patch_embed.bias", 0, {e},
                       1.0 / std::sqrt(static_cast<double>(pd)), init_rng);
  cls_ = add_param("cls_token", 0, {e}, e_scale, init_rng);
  pos_ = add_param("pos_embed", 0, {static_cast<std::size_t>(seq_len_), e},
                   e_scale, init_rng);

  for (int b = 0; b < arch_.length(); ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    const int group = b + 1;
    const std::size_t m = static_cast<std::size_t>(arch_.layers[b].mlp_dim);
    BlockIdx idx;
    idx.ln1_g = add_param(prefix + "ln1.gamma", group, {e}, -1.0, init_rng);
    idx.ln1_b = add_param(prefix + "ln1.beta", group, {e}, 0.0, init_rng);
    idx.wq = add_param(prefix + "attn.wq", group, {e, e}, e_scale, init_rng);
    idx.bq = add_param(prefix + "attn.bq", group, {e}, e_scale, init_rng);
    idx.wk = add_param(prefix + "attn.wk", group, {e, e}, e_scale, init_rng);
    idx.bk = add_param(prefix + "attn.bk", group, {e}, e_scale, init_rng);
    idx.wv = add_param(prefix + "attn.wv", group, {e, e}, e_scale, init_rng);
    idx.bv = add_param(prefix + "attn.bv", group, {e}, e_scale, init_rng);
    idx.wo = add_param(prefix + "attn.wo", group, {e, e}, e_scale, init_rng);
    idx.bo = add_param(prefix + "attn.bo", group, {e}, e_scale, init_rng);
    idx.ln2_g = add_param(prefix + "ln2.gamma", group, {e}, -1.0, init_rng);
    idx.ln2_b = add_param(prefix + "ln2.beta", group, {e}, 0.0, init_rng);
    idx.w1 = add_param(prefix + "ff.w1", group, {e, m}, e_scale, init_rng);
    idx.b1 = add_param(prefix + "ff.b1", group, {m}, e_scale, init_rng);
    idx.w2 = add_param(prefix + "ff.w2", group, {m, e},
                       1.0 / std::sqrt(static_cast<double>(m)), init_rng);
    idx.b2 = add_param(prefix + "ff.b2", group, {e},
                       1.0 / std::sqrt(static_cast<double>(m)), init_rng);
    blocks_idx_.push_back(idx);
  }

  const int head_group = arch_.length() + 1;
  fln_g_ = add_param("final_ln.gamma", head_group, {e}, -1.0, init_rng);
  fln_b_ = add_param("final_ln.beta", head_group, {e}, 0.0, init_rng);
  proj_w_ = add_param("proj.weight", head_group, {e, hid}, e_scale, init_rng);
  proj_b_ = add_param("proj.bias", head_group, {hid}, e_scale, init_rng);
  head_w_ = add_param("head.weight", head_group, {hid, out},
                      1.0 / std::sqrt(static_cast<double>(hid)), init_rng);
  head_b_ = add_param("head.bias", head_group, {out},
                      1.0 / std::sqrt(static_cast<double>(hid)), init_rng);

  trainable_.assign(group_count(), true);
}

template <class T>
void VitModel<T>::set_unfreeze_depth(int depth) {
  const int b = blocks();
  if (depth < 0 || depth > b + 1)
    throw ValidationError("unfreeze depth " + std::to_string(depth) +
                          " outside [0, " + std::to_string(b + 1) + "]");
  std::fill(trainable_.begin(), trainable_.end(), false);
  trainable_[b + 1] = true;  // readout always trains
  const int unfrozen_blocks = std::min(depth, b);
  for (int i = 0; i < unfrozen_blocks; ++i) trainable_[b - i] = true;
  if (depth == b + 1) trainable_[0] = true;  // embeddings last
}

template <class T>
Gradients<T> VitModel<T>::zero_gradients() const {
  Gradients<T> g(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    g[i].assign(params_[i].size(), T(0));
  return g;
}

namespace detail {

template <class T>
void apply_dropout(std::vector<T>& x, double rate, RngStream* rng,
                   std::vector<T>* mask_out) {
  if (rate <= 0.0 || rng == nullptr) return;
  const T inv_keep = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng->uniform01() < rate ? T(0) : inv_keep;
    x[i] *= mask[i];
  }
  if (mask_out) *mask_out = std::move(mask);
}

}  // namespace detail

template <class T>
std::vector<T> VitModel<T>::run_forward(std::span<const T> batch,
                                        std::size_t n, Mode mode,
                                        RngStream* dropout_rng,
                                        Trace* trace) const {
  const std::size_t c = static_cast<std::size_t>(fixed_.channels);
  const std::size_t hw = static_cast<std::size_t>(fixed_.image_size);
  const std::size_t p = static_cast<std::size_t>(fixed_.patch_size);
  if (batch.size() != n * c * hw * hw)
    throw ValidationError("batch size does not match n*channels*h*w");
  const std::size_t e = static_cast<std::size_t>(fixed_.embed_dim);
  const std::size_t s = static_cast<std::size_t>(patches_);
  const std::size_t s1 = static_cast<std::size_t>(seq_len_);
  const std::size_t pd = static_cast<std::size_t>(patch_dim_);
  const std::size_t grid = hw / p;
  const std::size_t rows = n * s1;
  RngStream* drop = (mode == Mode::Train) ? dropout_rng : nullptr;

  // Patchify: (n*S, pd), per patch channel-major then row-major pixels.
  std::vector<T> patches(n * s * pd);
  for (std::size_t i = 0; i < n; ++i) {
    const T* img = batch.data() + i * c * hw * hw;
    for (std::size_t py = 0; py < grid; ++py) {
      for (std::size_t px = 0; px < grid; ++px) {
        T* dst = patches.data() + (i * s + py * grid + px) * pd;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t dy = 0; dy < p; ++dy) {
            const T* src = img + ch * hw * hw + (py * p + dy) * hw + px * p;
            std::copy(src, src + p, dst);
            dst += p;
          }
        }
      }
    }
  }

  std::vector<T> embedded(n * s * e);
  linear_forward(patches.data(), params_[patch_w_].value.data(),
                 params_[patch_b_].value.data(), embedded.data(), n * s, pd,
                 e);

  std::vector<T> tokens(rows * e);
  const auto& cls = params_[cls_].value;
  const auto& pos = params_[pos_].value;
  for (std::size_t i = 0; i < n; ++i) {
    T* sample = tokens.data() + i * s1 * e;
    for (std::size_t j = 0; j < e; ++j) sample[j] = cls[j] + pos[j];
    for (std::size_t t = 0; t < s; ++t) {
      const T* src = embedded.data() + (i * s + t) * e;
      T* dst = sample + (t + 1) * e;
      const T* prow = pos.data() + (t + 1) * e;
      for (std::size_t j = 0; j < e; ++j) dst[j] = src[j] + prow[j];
    }
  }

  if (trace) {
    trace->n = n;
    trace->patches = std::move(patches);
    trace->blocks.resize(blocks_idx_.size());
  }

  std::vector<T> scratch_q, scratch_k, scratch_v, scores, ctx_h;
  for (std::size_t b = 0; b < blocks_idx_.size(); ++b) {
    const auto& idx = blocks_idx_[b];
    const LayerGene& gene = arch_.layers[b];
    const std::size_t heads = static_cast<std::size_t>(gene.heads);
    const std::size_t dh = e / heads;
    const std::size_t m = static_cast<std::size_t>(gene.mlp_dim);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    typename Trace::Block* tb = trace ? &trace->blocks[b] : nullptr;

    if (tb) tb->x_in = tokens;

    std::vector<T> normed(rows * e);
    LayerNormStats ln1_stats;
    layernorm_forward(tokens.data(), params_[idx.ln1_g].value.data(),
                      params_[idx.ln1_b].value.data(), normed.data(), rows, e,
                      trace ? &ln1_stats : nullptr);

    std::vector<T> q(rows * e), k(rows * e), v(rows * e);
    linear_forward(normed.data(), params_[idx.wq].value.data(),
                   params_[idx.bq].value.data(), q.data(), rows, e, e);
    linear_forward(normed.data(), params_[idx.wk].value.data(),
                   params_[idx.bk].value.data(), k.data(), rows, e, e);
    linear_forward(normed.data(), params_[idx.wv].value.data(),
                   params_[idx.bv].value.data(), v.data(), rows, e, e);

    std::vector<T> ctx(rows * e);
    std::vector<T> attn_probs;
    if (tb) attn_probs.resize(n * heads * s1 * s1);
    scratch_q.resize(s1 * dh);
    scratch_k.resize(s1 * dh);
    scratch_v.resize(s1 * dh);
    scores.resize(s1 * s1);
    ctx_h.resize(s1 * dh);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t t = 0; t < s1; ++t) {
          const std::size_t row = (i * s1 + t) * e + h * dh;
          std::copy(q.data() + row, q.data() + row + dh,
                    scratch_q.data() + t * dh);
          std::copy(k.data() + row, k.data() + row + dh,
                    scratch_k.data() + t * dh);
          std::copy(v.data() + row, v.data() + row + dh,
                    scratch_v.data() + t * dh);
        }
        gemm_nt(scratch_q.data(), scratch_k.data(), scores.data(), s1, dh,
                s1);
        for (auto& x : scores) x *= scale;
        softmax_rows(scores.data(), s1, s1);
        if (tb)
          std::copy(scores.begin(), scores.end(),
                    attn_probs.data() + (i * heads + h) * s1 * s1);
        gemm_nn(scores.data(), scratch_v.data(), ctx_h.data(), s1, s1, dh);
        for (std::size_t t = 0; t < s1; ++t)
          std::copy(ctx_h.data() + t * dh, ctx_h.data() + (t + 1) * dh,
                    ctx.data() + (i * s1 + t) * e + h * dh);
      }
    }

    std::vector<T> attn_out(rows * e);
    linear_forward(ctx.data(), params_[idx.wo].value.data(),
                   params_[idx.bo].value.data(), attn_out.data(), rows, e, e);
    std::vector<T> attn_mask;
    detail::apply_dropout(attn_out, gene.dropout, drop,
                          tb ? &attn_mask : nullptr);
    for (std::size_t i = 0; i < rows * e; ++i) tokens[i] += attn_out[i];

    if (tb) {
      tb->ln1_out = std::move(normed);
      tb->ln1_stats = std::move(ln1_stats);
      tb->q = std::move(q);
      tb->k = std::move(k);
      tb->v = std::move(v);
      tb->attn = std::move(attn_probs);
      tb->ctx = std::move(ctx);
      tb->attn_mask = std::move(attn_mask);
      tb->x_mid = tokens;
    }

    std::vector<T> normed2(rows * e);
    LayerNormStats ln2_stats;
    layernorm_forward(tokens.data(), params_[idx.ln2_g].value.data(),
                      params_[idx.ln2_b].value.data(), normed2.data(), rows,
                      e, trace ? &ln2_stats : nullptr);

    std::vector<T> f1(rows * m);
    linear_forward(normed2.data(), params_[idx.w1].value.data(),
                   params_[idx.b1].value.data(), f1.data(), rows, e, m);
    std::vector<T> g(rows * m);
    for (std::size_t i = 0; i < rows * m; ++i) g[i] = gelu(f1[i]);

    std::vector<T> f2(rows * e);
    linear_forward(g.data(), params_[idx.w2].value.data(),
                   params_[idx.b2].value.data(), f2.data(), rows, m, e);
    std::vector<T> ff_mask;
    detail::apply_dropout(f2, gene.dropout, drop, tb ? &ff_mask : nullptr);
    for (std::size_t i = 0; i < rows * e; ++i) tokens[i] += f2[i];

    if (tb) {
      tb->ln2_out = std::move(normed2);
      tb->ln2_stats = std::move(ln2_stats);
      tb->f1 = std::move(f1);
      tb->g = std::move(g);
      tb->ff_mask = std::move(ff_mask);
      tb->x_out = tokens;
    }
  }

  std::vector<T> fln_out(rows * e);
  LayerNormStats fln_stats;
  layernorm_forward(tokens.data(), params_[fln_g_].value.data(),
                    params_[fln_b_].value.data(), fln_out.data(), rows, e,
                    trace ? &fln_stats : nullptr);

  const std::size_t hid = static_cast<std::size_t>(fixed_.hidden_dim);
  const std::size_t out_w = static_cast<std::size_t>(head_.width);
  std::vector<T> cls_rows(n * e);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(fln_out.data() + i * s1 * e, fln_out.data() + i * s1 * e + e,
              cls_rows.data() + i * e);

  std::vector<T> pr(n * hid);
  linear_forward(cls_rows.data(), params_[proj_w_].value.data(),
                 params_[proj_b_].value.data(), pr.data(), n, e, hid);
  std::vector<T> pa(n * hid);
  for (std::size_t i = 0; i < n * hid; ++i) pa[i] = gelu(pr[i]);

  std::vector<T> logits(n * out_w);
  linear_forward(pa.data(), params_[head_w_].value.data(),
                 params_[head_b_].value.data(), logits.data(), n, hid, out_w);

  if (trace) {
    trace->fln_in = std::move(tokens);
    trace->fln_stats = std::move(fln_stats);
    trace->fln_out = std::move(fln_out);
    trace->cls_rows = std::move(cls_rows);
    trace->pr = std::move(pr);
    trace->pa = std::move(pa);
    trace->logits = logits;
  }
  return logits;
}

template <class T>
std::vector<T> VitModel<T>::forward(std::span<const T> batch, std::size_t n,
                                    Mode mode, RngStream* dropout_rng) const {
  return run_forward(batch, n, mode, dropout_rng, nullptr);
}

template <class T>
void VitModel<T>::run_backward(const Trace& trace, std::span<const T> dlogits,
                               Gradients<T>& grads) const {
  const std::size_t n = trace.n;
  const std::size_t e = static_cast<std::size_t>(fixed_.embed_dim);
  const std::size_t s = static_cast<std::size_t>(patches_);
  const std::size_t s1 = static_cast<std::size_t>(seq_len_);
  const std::size_t pd = static_cast<std::size_t>(patch_dim_);
  const std::size_t hid = static_cast<std::size_t>(fixed_.hidden_dim);
  const std::size_t out_w = static_cast<std::size_t>(head_.width);
  const std::size_t rows = n * s1;

  // Head and projection.
  std::vector<T> dpa(n * hid);
  linear_backward(trace.pa.data(), params_[head_w_].value.data(),
                  dlogits.data(), dpa.data(), grads[head_w_].data(),
                  grads[head_b_].data(), n, hid, out_w);
  std::vector<T> dpr(n * hid);
  for (std::size_t i = 0; i < n * hid; ++i)
    dpr[i] = dpa[i] * gelu_grad(trace.pr[i]);
  std::vector<T> dcls(n * e);
  linear_backward(trace.cls_rows.data(), params_[proj_w_].value.data(),
                  dpr.data(), dcls.data(), grads[proj_w_].data(),
                  grads[proj_b_].data(), n, e, hid);

  // Scatter class-token gradient into the full sequence, then through the
  // final layernorm.
  std::vector<T> dfln(rows * e, T(0));
  for (std::size_t i = 0; i < n; ++i)
    std::copy(dcls.data() + i * e, dcls.data() + (i + 1) * e,
              dfln.data() + i * s1 * e);
  std::vector<T> dtokens(rows * e);
  layernorm_backward(trace.fln_in.data(), params_[fln_g_].value.data(),
                     dfln.data(), trace.fln_stats, dtokens.data(),
                     grads[fln_g_].data(), grads[fln_b_].data(), rows, e);

  std::vector<T> scratch_a(s1 * s1), scratch_da(s1 * s1), scratch_ds(s1 * s1);
  std::vector<T> qh, kh, vh, dctx_h, dqh, dkh, dvh;

  for (int bi = static_cast<int>(blocks_idx_.size()) - 1; bi >= 0; --bi) {
    const auto& idx = blocks_idx_[bi];
    const auto& tb = trace.blocks[bi];
    const LayerGene& gene = arch_.layers[bi];
    const std::size_t heads = static_cast<std::size_t>(gene.heads);
    const std::size_t dh = e / heads;
    const std::size_t m = static_cast<std::size_t>(gene.mlp_dim);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    // Feed-forward path: x_out = x_mid + dropout(f2).
    std::vector<T> df2 = dtokens;
    if (!tb.ff_mask.empty())
      for (std::size_t i = 0; i < df2.size(); ++i) df2[i] *= tb.ff_mask[i];
    std::vector<T> dg(rows * m);
    linear_backward(tb.g.data(), params_[idx.w2].value.data(), df2.data(),
                    dg.data(), grads[idx.w2].data(), grads[idx.b2].data(),
                    rows, m, e);
    std::vector<T> df1(rows * m);
    for (std::size_t i = 0; i < rows * m; ++i)
      df1[i] = dg[i] * gelu_grad(tb.f1[i]);
    std::vector<T> dln2(rows * e);
    linear_backward(tb.ln2_out.data(), params_[idx.w1].value.data(),
                    df1.data(), dln2.data(), grads[idx.w1].data(),
                    grads[idx.b1].data(), rows, e, m);
    std::vector<T> dmid(rows * e);
    layernorm_backward(tb.x_mid.data(), params_[idx.ln2_g].value.data(),
                       dln2.data(), tb.ln2_stats, dmid.data(),
                       grads[idx.ln2_g].data(), grads[idx.ln2_b].data(), rows,
                       e);
    for (std::size_t i = 0; i < rows * e; ++i) dmid[i] += dtokens[i];

    // Attention path: x_mid = x_in + dropout(attn_out).
    std::vector<T> do_ = dmid;
    if (!tb.attn_mask.empty())
      for (std::size_t i = 0; i < do_.size(); ++i) do_[i] *= tb.attn_mask[i];
    std::vector<T> dctx(rows * e);
    linear_backward(tb.ctx.data(), params_[idx.wo].value.data(), do_.data(),
                    dctx.data(), grads[idx.wo].data(), grads[idx.bo].data(),
                    rows, e, e);

    std::vector<T> dq(rows * e, T(0)), dk(rows * e, T(0)), dv(rows * e, T(0));
    qh.resize(s1 * dh);
    kh.resize(s1 * dh);
    vh.resize(s1 * dh);
    dctx_h.resize(s1 * dh);
    dqh.resize(s1 * dh);
    dkh.resize(s1 * dh);
    dvh.resize(s1 * dh);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t t = 0; t < s1; ++t) {
          const std::size_t row = (i * s1 + t) * e + h * dh;
          std::copy(tb.q.data() + row, tb.q.data() + row + dh,
                    qh.data() + t * dh);
          std::copy(tb.k.data() + row, tb.k.data() + row + dh,
                    kh.data() + t * dh);
          std::copy(tb.v.data() + row, tb.v.data() + row + dh,
                    vh.data() + t * dh);
          std::copy(dctx.data() + row, dctx.data() + row + dh,
                    dctx_h.data() + t * dh);
        }
        const T* probs = tb.attn.data() + (i * heads + h) * s1 * s1;
        // dA = dctx * V^T ; dV = A^T * dctx
        gemm_nt(dctx_h.data(), vh.data(), scratch_da.data(), s1, dh, s1);
        gemm_tn(probs, dctx_h.data(), dvh.data(), s1, s1, dh);
        softmax_backward_rows(probs, scratch_da.data(), scratch_ds.data(),
                              s1, s1);
        for (auto& x : scratch_ds) x *= scale;
        gemm_nn(scratch_ds.data(), kh.data(), dqh.data(), s1, s1, dh);
        gemm_tn(scratch_ds.data(), qh.data(), dkh.data(), s1, s1, dh);
        for (std::size_t t = 0; t < s1; ++t) {
          const std::size_t row = (i * s1 + t) * e + h * dh;
          for (std::size_t j = 0; j < dh; ++j) {
            dq[row + j] += dqh[t * dh + j];
            dk[row + j] += dkh[t * dh + j];
            dv[row + j] += dvh[t * dh + j];
          }
        }
      }
    }

    std::vector<T> dln1(rows * e, T(0));
    std::vector<T> dtmp(rows * e);
    linear_backward(tb.ln1_out.data(), params_[idx.wq].value.data(),
                    dq.data(), dtmp.data(), grads[idx.wq].data(),
                    grads[idx.bq].data(), rows, e, e);
    for (std::size_t i = 0; i < rows * e; ++i) dln1[i] += dtmp[i];
    linear_backward(tb.ln1_out.data(), params_[idx.wk].value.data(),
                    dk.data(), dtmp.data(), grads[idx.wk].data(),
                    grads[idx.bk].data(), rows, e, e);
    for (std::size_t i = 0; i < rows * e; ++i) dln1[i] += dtmp[i];
    linear_backward(tb.ln1_out.data(), params_[idx.wv].value.data(),
                    dv.data(), dtmp.data(), grads[idx.wv].data(),
                    grads[idx.bv].data(), rows, e, e);
    for (std::size_t i = 0; i < rows * e; ++i) dln1[i] += dtmp[i];

    std::vector<T> dxin(rows * e);
    layernorm_backward(tb.x_in.data(), params_[idx.ln1_g].value.data(),
                       dln1.data(), tb.ln1_stats, dxin.data(),
                       grads[idx.ln1_g].data(), grads[idx.ln1_b].data(), rows,
                       e);
    for (std::size_t i = 0; i < rows * e; ++i) dtokens[i] = dmid[i] + dxin[i];
  }

  // Token assembly: cls/pos embeddings and the patch projection.
  auto& dcls_tok = grads[cls_];
  auto& dpos = grads[pos_];
  std::vector<T> dembed(n * s * e);
  for (std::size_t i = 0; i < n; ++i) {
    const T* sample = dtokens.data() + i * s1 * e;
    for (std::size_t j = 0; j < e; ++j) {
      dcls_tok[j] += sample[j];
      dpos[j] += sample[j];
    }
    for (std::size_t t = 0; t < s; ++t) {
      const T* src = sample + (t + 1) * e;
      T* dst = dembed.data() + (i * s + t) * e;
      T* prow = dpos.data() + (t + 1) * e;
      for (std::size_t j = 0; j < e; ++j) {
        dst[j] = src[j];
        prow[j] += src[j];
      }
    }
  }
  linear_backward(trace.patches.data(), params_[patch_w_].value.data(),
                  dembed.data(), static_cast<T*>(nullptr),
                  grads[patch_w_].data(), grads[patch_b_].data(), n * s, pd,
                  e);
}

template <class T>
LossValue<T> VitModel<T>::loss_and_grad(std::span<const T> batch,
                                        std::size_t n,
                                        const TargetBatch<T>& targets,
                                        const LossConfig& loss,
                                        Gradients<T>& grads,
                                        RngStream* dropout_rng) const {
  Trace trace;
  run_forward(batch, n, Mode::Train, dropout_rng, &trace);

  std::vector<T> dlogits;
  const T value = loss_and_logit_grad(loss, std::span<const T>(trace.logits),
                                      n, static_cast<std::size_t>(head_.width),
                                      targets, dlogits);
  for (auto& g : grads)
    std::fill(g.begin(), g.end(), T(0));
  run_backward(trace, dlogits, grads);

  for (std::size_t p = 0; p < params_.size(); ++p)
    if (!trainable_[params_[p].group])
      std::fill(grads[p].begin(), grads[p].end(), T(0));

  return {value};
}

}  // namespace evostack::nn
