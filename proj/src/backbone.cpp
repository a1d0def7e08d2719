#include "misstsm/backbone.hpp"

#include <cmath>
#include <stdexcept>

#include "misstsm/rng.hpp"

namespace misstsm {

void BackboneConfig::validate() const {
  if (model_dim == 0 || model_dim % 2 != 0) {
    throw std::invalid_argument("backbone config: model_dim must be positive and even");
  }
  if (heads == 0 || model_dim % heads != 0) {
    throw std::invalid_argument("backbone config: heads must divide model_dim");
  }
  if (n_enc == 0 || n_dec == 0) {
    throw std::invalid_argument("backbone config: need at least one encoder and decoder block");
  }
  if (ff_dim == 0 || input_dim == 0 || recon_dim == 0) {
    throw std::invalid_argument("backbone config: widths must be positive");
  }
}

Tensor pos_encode_1d(std::size_t T, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw std::invalid_argument("pos_encode_1d: dim must be positive and even");
  }
  Tensor pe({T, dim});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(t) *
                           std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                                  static_cast<double>(dim));
      pe.at(t, 2 * i) = std::sin(angle);
      pe.at(t, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

MaeBackbone::MaeBackbone(BackboneConfig cfg, ParamStore& store, std::uint64_t seed,
                         std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  cfg_.validate();
  register_params(seed);
}

MaeBackbone::MaeBackbone(BackboneConfig cfg, ParamStore& store, std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  cfg_.validate();
  store_->get(prefix_ + "proj_in.w");  // fail fast on a foreign checkpoint
}

void MaeBackbone::register_params(std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, 0xBACC));
  const std::size_t dim = cfg_.model_dim;
  store_->add(prefix_ + "proj_in.w", glorot_uniform({cfg_.input_dim, dim}, rng));
  store_->add(prefix_ + "proj_in.b", Tensor({dim}));
  store_->add(prefix_ + "proj_out.w", glorot_uniform({dim, cfg_.recon_dim}, rng));
  store_->add(prefix_ + "proj_out.b", Tensor({cfg_.recon_dim}));
  store_->add(prefix_ + "mask_token", normal_init({dim}, rng, 0.02));

  auto add_block = [&](const std::string& bp) {
    store_->add(bp + "ln1.g", Tensor::full({dim}, 1.0));
    store_->add(bp + "ln1.b", Tensor({dim}));
    store_->add(bp + "wq", glorot_uniform({dim, dim}, rng));
    store_->add(bp + "bq", Tensor({dim}));
    store_->add(bp + "wk", glorot_uniform({dim, dim}, rng));
    store_->add(bp + "bk", Tensor({dim}));
    store_->add(bp + "wv", glorot_uniform({dim, dim}, rng));
    store_->add(bp + "bv", Tensor({dim}));
    store_->add(bp + "wo", glorot_uniform({dim, dim}, rng));
    store_->add(bp + "bo", Tensor({dim}));
    store_->add(bp + "ln2.g", Tensor::full({dim}, 1.0));
    store_->add(bp + "ln2.b", Tensor({dim}));
    store_->add(bp + "ff1.w", glorot_uniform({dim, cfg_.ff_dim}, rng));
    store_->add(bp + "ff1.b", Tensor({cfg_.ff_dim}));
    store_->add(bp + "ff2.w", glorot_uniform({cfg_.ff_dim, dim}, rng));
    store_->add(bp + "ff2.b", Tensor({dim}));
  };
  for (std::size_t i = 0; i < cfg_.n_enc; ++i) add_block(prefix_ + "enc" + std::to_string(i) + ".");
  for (std::size_t i = 0; i < cfg_.n_dec; ++i) add_block(prefix_ + "dec" + std::to_string(i) + ".");
  store_->add(prefix_ + "enc_norm.g", Tensor::full({dim}, 1.0));
  store_->add(prefix_ + "enc_norm.b", Tensor({dim}));
  store_->add(prefix_ + "dec_norm.g", Tensor::full({dim}, 1.0));
  store_->add(prefix_ + "dec_norm.b", Tensor({dim}));
}

std::vector<std::size_t> MaeBackbone::all_visible(std::size_t T) {
  std::vector<std::size_t> v(T);
  for (std::size_t t = 0; t < T; ++t) v[t] = t;
  return v;
}

// Pre-LN block: x + MHSA(LN1(x)), then + FF(LN2(.)). The cache keeps every
// intermediate the backward pass needs.
Tensor MaeBackbone::run_block(const std::string& bp, const Tensor& x, BlockCache& cache) const {
  const std::size_t t_len = x.shape[0], dim = cfg_.model_dim, h = cfg_.heads;
  const std::size_t hd = dim / h;
  cache.x_in = x;
  cache.x_ln = layer_norm(x, p(bp + "ln1.g"), p(bp + "ln1.b"), &cache.ln1);
  cache.q = affine(cache.x_ln, p(bp + "wq"), p(bp + "bq"));
  cache.k = affine(cache.x_ln, p(bp + "wk"), p(bp + "bk"));
  cache.v = affine(cache.x_ln, p(bp + "wv"), p(bp + "bv"));

  cache.heads_cat = Tensor({t_len, dim});
  cache.attn.clear();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t head = 0; head < h; ++head) {
    const std::size_t off = head * hd;
    Tensor scores({t_len, t_len});
    for (std::size_t i = 0; i < t_len; ++i)
      for (std::size_t j = 0; j < t_len; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < hd; ++d) {
          acc += cache.q.at(i, off + d) * cache.k.at(j, off + d);
        }
        scores.at(i, j) = acc * inv_sqrt;
      }
    cache.attn.push_back(softmax_with_bias(scores, Tensor({t_len})));
    const Tensor& a = cache.attn.back().values;
    for (std::size_t i = 0; i < t_len; ++i)
      for (std::size_t d = 0; d < hd; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < t_len; ++j) acc += a.at(i, j) * cache.v.at(j, off + d);
        cache.heads_cat.at(i, off + d) = acc;
      }
  }
  Tensor attn_out = affine(cache.heads_cat, p(bp + "wo"), p(bp + "bo"));
  cache.after_attn = add(x, attn_out);

  cache.y_ln = layer_norm(cache.after_attn, p(bp + "ln2.g"), p(bp + "ln2.b"), &cache.ln2);
  cache.ff_pre = affine(cache.y_ln, p(bp + "ff1.w"), p(bp + "ff1.b"));
  cache.ff_act = gelu(cache.ff_pre);
  Tensor ff_out = affine(cache.ff_act, p(bp + "ff2.w"), p(bp + "ff2.b"));
  return add(cache.after_attn, ff_out);
}

Tensor MaeBackbone::run_block_backward(const std::string& bp, const Tensor& dy,
                                       const BlockCache& cache) const {
  const std::size_t t_len = cache.x_in.shape[0], dim = cfg_.model_dim, h = cfg_.heads;
  const std::size_t hd = dim / h;
  auto accumulate = [&](const std::string& name, const Tensor& grad) {
    Tensor& slot = g(bp + name);
    for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += grad.data[i];
  };

  // Feed-forward branch.
  AffineGrads ff2 = affine_backward(dy, cache.ff_act, p(bp + "ff2.w"));
  accumulate("ff2.w", ff2.dw);
  accumulate("ff2.b", ff2.db);
  Tensor d_ff_pre = gelu_backward(ff2.dx, cache.ff_pre);
  AffineGrads ff1 = affine_backward(d_ff_pre, cache.y_ln, p(bp + "ff1.w"));
  accumulate("ff1.w", ff1.dw);
  accumulate("ff1.b", ff1.db);
  LayerNormGrads ln2 = layer_norm_backward(ff1.dx, cache.ln2, p(bp + "ln2.g"));
  accumulate("ln2.g", ln2.dgamma);
  accumulate("ln2.b", ln2.dbeta);
  Tensor d_after_attn = add(dy, ln2.dx);  // residual joins the branch gradient

  // Attention branch.
  AffineGrads wo = affine_backward(d_after_attn, cache.heads_cat, p(bp + "wo"));
  accumulate("wo", wo.dw);
  accumulate("bo", wo.db);
  Tensor dq({t_len, dim}), dk({t_len, dim}), dv({t_len, dim});
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t head = 0; head < h; ++head) {
    const std::size_t off = head * hd;
    const Tensor& a = cache.attn[head].values;
    Tensor da({t_len, t_len});
    for (std::size_t i = 0; i < t_len; ++i)
      for (std::size_t j = 0; j < t_len; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < hd; ++d) {
          acc += wo.dx.at(i, off + d) * cache.v.at(j, off + d);
        }
        da.at(i, j) = acc;
      }
    for (std::size_t j = 0; j < t_len; ++j)
      for (std::size_t d = 0; d < hd; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t_len; ++i) acc += a.at(i, j) * wo.dx.at(i, off + d);
        dv.at(j, off + d) = acc;
      }
    Tensor ds = softmax_backward(da, cache.attn[head]);
    for (std::size_t i = 0; i < t_len; ++i)
      for (std::size_t j = 0; j < t_len; ++j) {
        const double s = ds.at(i, j) * inv_sqrt;
        if (s == 0.0) continue;
        for (std::size_t d = 0; d < hd; ++d) {
          dq.at(i, off + d) += s * cache.k.at(j, off + d);
          dk.at(j, off + d) += s * cache.q.at(i, off + d);
        }
      }
  }
  AffineGrads qg = affine_backward(dq, cache.x_ln, p(bp + "wq"));
  AffineGrads kg = affine_backward(dk, cache.x_ln, p(bp + "wk"));
  AffineGrads vg = affine_backward(dv, cache.x_ln, p(bp + "wv"));
  accumulate("wq", qg.dw);
  accumulate("bq", qg.db);
  accumulate("wk", kg.dw);
  accumulate("bk", kg.db);
  accumulate("wv", vg.dw);
  accumulate("bv", vg.db);
  Tensor d_x_ln = add(add(qg.dx, kg.dx), vg.dx);
  LayerNormGrads ln1 = layer_norm_backward(d_x_ln, cache.ln1, p(bp + "ln1.g"));
  accumulate("ln1.g", ln1.dgamma);
  accumulate("ln1.b", ln1.dbeta);
  return add(d_after_attn, ln1.dx);
}

MaeBackbone::EncodeCache MaeBackbone::encode(const Tensor& tokens,
                                             const std::vector<std::size_t>& visible) const {
  if (tokens.rank() != 2 || tokens.shape[1] != cfg_.input_dim) {
    throw std::invalid_argument("backbone encode: expected T x " +
                                std::to_string(cfg_.input_dim) + " tokens, got " +
                                tokens.shape_str());
  }
  if (visible.empty()) throw std::invalid_argument("backbone encode: no visible tokens");
  const std::size_t t_len = tokens.shape[0], dim = cfg_.model_dim;

  EncodeCache cache;
  cache.tokens_in = tokens;
  cache.visible = visible;
  cache.projected = affine(tokens, p("proj_in.w"), p("proj_in.b"));
  Tensor pe = pos_encode_1d(t_len, dim);
  for (std::size_t i = 0; i < cache.projected.size(); ++i) {
    cache.projected.data[i] += pe.data[i];
  }

  cache.enc_in = Tensor({visible.size(), dim});
  for (std::size_t r = 0; r < visible.size(); ++r) {
    if (visible[r] >= t_len) throw std::invalid_argument("backbone encode: index out of range");
    for (std::size_t d = 0; d < dim; ++d) cache.enc_in.at(r, d) = cache.projected.at(visible[r], d);
  }

  Tensor x = cache.enc_in;
  cache.blocks.resize(cfg_.n_enc);
  for (std::size_t b = 0; b < cfg_.n_enc; ++b) {
    x = run_block("enc" + std::to_string(b) + ".", x, cache.blocks[b]);
  }
  cache.enc_out = layer_norm(x, p("enc_norm.g"), p("enc_norm.b"), &cache.final_ln);
  return cache;
}

Tensor MaeBackbone::encode_backward(const Tensor& d_enc_out, const EncodeCache& cache) const {
  LayerNormGrads fin = layer_norm_backward(d_enc_out, cache.final_ln, p("enc_norm.g"));
  {
    Tensor& gg = g("enc_norm.g");
    Tensor& gb = g("enc_norm.b");
    for (std::size_t i = 0; i < gg.size(); ++i) gg.data[i] += fin.dgamma.data[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += fin.dbeta.data[i];
  }
  Tensor dx = std::move(fin.dx);
  for (std::size_t b = cfg_.n_enc; b-- > 0;) {
    dx = run_block_backward("enc" + std::to_string(b) + ".", dx, cache.blocks[b]);
  }

  // Scatter visible-row gradients back to full-length token positions.
  const std::size_t t_len = cache.tokens_in.shape[0], dim = cfg_.model_dim;
  Tensor d_projected({t_len, dim});
  for (std::size_t r = 0; r < cache.visible.size(); ++r)
    for (std::size_t d = 0; d < dim; ++d) d_projected.at(cache.visible[r], d) += dx.at(r, d);

  AffineGrads pg = affine_backward(d_projected, cache.tokens_in, p("proj_in.w"));
  {
    Tensor& gw = g("proj_in.w");
    Tensor& gb = g("proj_in.b");
    for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += pg.dw.data[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += pg.db.data[i];
  }
  return pg.dx;
}

MaeBackbone::DecodeCache MaeBackbone::decode(const EncodeCache& enc) const {
  const std::size_t t_len = enc.tokens_in.shape[0], dim = cfg_.model_dim;
  DecodeCache cache;
  cache.dec_in = Tensor({t_len, dim});
  const Tensor& mask_token = p("mask_token");
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t d = 0; d < dim; ++d) cache.dec_in.at(t, d) = mask_token.data[d];
  for (std::size_t r = 0; r < enc.visible.size(); ++r)
    for (std::size_t d = 0; d < dim; ++d) cache.dec_in.at(enc.visible[r], d) = enc.enc_out.at(r, d);
  Tensor pe = pos_encode_1d(t_len, dim);
  for (std::size_t i = 0; i < cache.dec_in.size(); ++i) cache.dec_in.data[i] += pe.data[i];

  Tensor x = cache.dec_in;
  cache.blocks.resize(cfg_.n_dec);
  for (std::size_t b = 0; b < cfg_.n_dec; ++b) {
    x = run_block("dec" + std::to_string(b) + ".", x, cache.blocks[b]);
  }
  cache.dec_normed = layer_norm(x, p("dec_norm.g"), p("dec_norm.b"), &cache.final_ln);
  cache.recon = affine(cache.dec_normed, p("proj_out.w"), p("proj_out.b"));
  return cache;
}

Tensor MaeBackbone::decode_backward(const Tensor& d_recon, const DecodeCache& dec,
                                    const EncodeCache& enc) const {
  AffineGrads out = affine_backward(d_recon, dec.dec_normed, p("proj_out.w"));
  {
    Tensor& gw = g("proj_out.w");
    Tensor& gb = g("proj_out.b");
    for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += out.dw.data[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += out.db.data[i];
  }
  LayerNormGrads fin = layer_norm_backward(out.dx, dec.final_ln, p("dec_norm.g"));
  {
    Tensor& gg = g("dec_norm.g");
    Tensor& gb = g("dec_norm.b");
    for (std::size_t i = 0; i < gg.size(); ++i) gg.data[i] += fin.dgamma.data[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += fin.dbeta.data[i];
  }
  Tensor dx = std::move(fin.dx);
  for (std::size_t b = cfg_.n_dec; b-- > 0;) {
    dx = run_block_backward("dec" + std::to_string(b) + ".", dx, dec.blocks[b]);
  }

  // dx is the gradient at dec_in: visible slots flow to enc_out, the
  // others to the shared learnable mask token.
  const std::size_t dim = cfg_.model_dim;
  const std::size_t t_len = enc.tokens_in.shape[0];
  Tensor d_enc_out({enc.visible.size(), dim});
  std::vector<std::uint8_t> is_visible(t_len, 0);
  for (std::size_t r = 0; r < enc.visible.size(); ++r) {
    is_visible[enc.visible[r]] = 1;
    for (std::size_t d = 0; d < dim; ++d) d_enc_out.at(r, d) = dx.at(enc.visible[r], d);
  }
  Tensor& gm = g("mask_token");
  for (std::size_t t = 0; t < t_len; ++t) {
    if (is_visible[t]) continue;
    for (std::size_t d = 0; d < dim; ++d) gm.data[d] += dx.at(t, d);
  }
  return d_enc_out;
}

}  // namespace misstsm
