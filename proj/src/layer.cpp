#include "misstsm/layer.hpp"

#include <cmath>
#include <stdexcept>

#include "misstsm/rng.hpp"

namespace misstsm {

void MissTSMConfig::validate() const {
  if (embed_dim == 0 || embed_dim % 4 != 0) {
    throw std::invalid_argument("misstsm config: embed_dim must be a positive multiple of 4, got " +
                                std::to_string(embed_dim));
  }
  if (key_dim == 0) throw std::invalid_argument("misstsm config: key_dim must be positive");
  if (heads == 0) throw std::invalid_argument("misstsm config: heads must be positive");
  if (eta > -1e8) {
    throw std::invalid_argument("misstsm config: eta must be <= -1e8 to guarantee exact zeros");
  }
}

Tensor tfi_embed(const Tensor& X, const Tensor& M, const Tensor& tfi_weight,
                 const Tensor& tfi_bias) {
  require_same_shape(X, M, "tfi_embed");
  if (X.rank() != 2) throw std::invalid_argument("tfi_embed: expected T x N input");
  const std::size_t d_embed = tfi_bias.size();
  if (tfi_weight.size() != d_embed) {
    throw std::invalid_argument("tfi_embed: weight and bias widths disagree");
  }
  const std::size_t t_len = X.shape[0], n = X.shape[1];
  Tensor h({t_len, n, d_embed});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t d = 0; d < n; ++d) {
      if (M.at(t, d) != 0.0) continue;  // dummy embedding: all zeros
      const double x = X.at(t, d);
      double* out = h.data.data() + (t * n + d) * d_embed;
      for (std::size_t j = 0; j < d_embed; ++j) {
        out[j] = tfi_weight.data[j] * x + tfi_bias.data[j];
      }
    }
  return h;
}

Tensor pos_encode_2d(std::size_t T, std::size_t N, std::size_t D) {
  if (D == 0 || D % 4 != 0) {
    throw std::invalid_argument("pos_encode_2d: D must be a positive multiple of 4, got " +
                                std::to_string(D));
  }
  const std::size_t quarter = D / 4;
  std::vector<double> inv_freq(quarter);
  for (std::size_t i = 0; i < quarter; ++i) {
    inv_freq[i] = std::pow(10000.0, -(4.0 * static_cast<double>(i) / static_cast<double>(D)));
  }
  Tensor pe({T, N, D});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < N; ++d) {
      double* out = pe.data.data() + (t * N + d) * D;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double at = static_cast<double>(t) * inv_freq[i];
        const double ad = static_cast<double>(d) * inv_freq[i];
        out[2 * i] = std::sin(at);
        out[2 * i + 1] = std::cos(at);
        out[D / 2 + 2 * i] = std::sin(ad);
        out[D / 2 + 2 * i + 1] = std::cos(ad);
      }
    }
  return pe;
}

MfaaScoreResult mfaa_score(const Tensor& qhat, const Tensor& khat_t, const Tensor& m_t,
                           double eta) {
  const std::size_t d_k = qhat.size();
  if (khat_t.rank() != 2 || khat_t.shape[1] != d_k) {
    throw std::invalid_argument("mfaa_score: key block " + khat_t.shape_str() +
                                " does not match query width " + std::to_string(d_k));
  }
  const std::size_t n = khat_t.shape[0];
  if (m_t.size() != n) throw std::invalid_argument("mfaa_score: mask width mismatch");

  Tensor scores({n});
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (std::size_t d = 0; d < n; ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d_k; ++j) acc += qhat.data[j] * khat_t.at(d, j);
    scores.data[d] = acc * inv_sqrt;
  }
  Tensor bias({n});
  for (std::size_t d = 0; d < n; ++d) bias.data[d] = eta * m_t.data[d];
  SoftmaxResult sm = softmax_with_bias(scores, bias);
  return MfaaScoreResult{std::move(sm.values), sm.any_degenerate};
}

Tensor mfaa_latent(const Tensor& a_t, const Tensor& vhat_t) {
  if (vhat_t.rank() != 2 || vhat_t.shape[0] != a_t.size()) {
    throw std::invalid_argument("mfaa_latent: weights " + a_t.shape_str() +
                                " do not match value block " + vhat_t.shape_str());
  }
  const std::size_t n = vhat_t.shape[0], d_k = vhat_t.shape[1];
  Tensor latent({d_k});
  for (std::size_t d = 0; d < n; ++d) {
    const double w = a_t.data[d];
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < d_k; ++j) latent.data[j] += w * vhat_t.at(d, j);
  }
  return latent;
}

MissTSMLayer::MissTSMLayer(MissTSMConfig cfg, std::size_t n_variates, ParamStore& store,
                           std::uint64_t seed, std::string prefix)
    : cfg_(cfg), n_(n_variates), store_(&store), prefix_(std::move(prefix)) {
  cfg_.validate();
  register_params(seed);
}

MissTSMLayer::MissTSMLayer(MissTSMConfig cfg, std::size_t n_variates, ParamStore& store,
                           std::string prefix)
    : cfg_(cfg), n_(n_variates), store_(&store), prefix_(std::move(prefix)) {
  cfg_.validate();
  store_->get(prefix_ + "tfi_w");  // fail fast when the checkpoint lacks the layer
}

void MissTSMLayer::register_params(std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, 0xA11CE));
  const std::size_t d_embed = cfg_.embed_dim, d_k = cfg_.key_dim, d_out = cfg_.output_dim();
  store_->add(prefix_ + "tfi_w", glorot_uniform({d_embed, 1}, rng));
  store_->add(prefix_ + "tfi_b", Tensor({d_embed}));
  store_->add(prefix_ + "query", glorot_uniform({1, d_embed}, rng));
  for (std::size_t i = 0; i < cfg_.heads; ++i) {
    const std::string hp = prefix_ + "h" + std::to_string(i) + ".";
    store_->add(hp + "wq", glorot_uniform({d_embed, d_k}, rng));
    store_->add(hp + "wk", glorot_uniform({d_embed, d_k}, rng));
    store_->add(hp + "wv", glorot_uniform({d_embed, d_k}, rng));
  }
  store_->add(prefix_ + "wo", glorot_uniform({cfg_.heads * d_k, d_out}, rng));
  if (cfg_.mode == LayerMode::Wrapper) {
    store_->add(prefix_ + "proj_w", glorot_uniform({d_out, n_}, rng));
    store_->add(prefix_ + "proj_b", Tensor({n_}));
  }
}

void MissTSMLayer::freeze_tfi_identity() {
  ParamSlot& w = store_->get(prefix_ + "tfi_w");
  ParamSlot& b = store_->get(prefix_ + "tfi_b");
  std::fill(w.value.data.begin(), w.value.data.end(), 1.0);
  std::fill(b.value.data.begin(), b.value.data.end(), 0.0);
  w.trainable = false;
  b.trainable = false;
}

MissTSMLayer::Forward MissTSMLayer::forward(const Tensor& X, const Tensor& M) const {
  require_same_shape(X, M, "misstsm forward");
  if (X.rank() != 2 || X.shape[1] != n_) {
    throw std::invalid_argument("misstsm forward: expected T x " + std::to_string(n_) +
                                " input, got " + X.shape_str());
  }
  const std::size_t t_len = X.shape[0];
  const std::size_t d_embed = cfg_.embed_dim, d_k = cfg_.key_dim, h = cfg_.heads;
  const std::size_t d_out = cfg_.output_dim();

  Forward fw;
  fw.X = X;
  fw.M = M;
  fw.all_missing.assign(t_len, 0);

  // Z = TFI(X, M) + PE, flattened to (T*N) x D for the head projections.
  Tensor h_tfi = tfi_embed(X, M, p("tfi_w"), p("tfi_b"));
  Tensor pe = pos_encode_2d(t_len, n_, d_embed);
  fw.z = Tensor({t_len * n_, d_embed});
  for (std::size_t i = 0; i < fw.z.size(); ++i) fw.z.data[i] = h_tfi.data[i] + pe.data[i];

  fw.latent_cat = Tensor({t_len, h * d_k});
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_k));

  for (std::size_t i = 0; i < h; ++i) {
    const std::string hp = "h" + std::to_string(i) + ".";
    fw.qhat.push_back(matmul(p("query"), p(hp + "wq")));
    fw.khat.push_back(matmul(fw.z, p(hp + "wk")));
    fw.vhat.push_back(matmul(fw.z, p(hp + "wv")));
    const Tensor& q = fw.qhat.back();
    const Tensor& k = fw.khat.back();

    Tensor scores({t_len, n_});
    Tensor bias({t_len, n_});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t d = 0; d < n_; ++d) {
        double acc = 0.0;
        const double* krow = k.data.data() + (t * n_ + d) * d_k;
        for (std::size_t j = 0; j < d_k; ++j) acc += q.data[j] * krow[j];
        scores.at(t, d) = acc * inv_sqrt;
        bias.at(t, d) = cfg_.eta * M.at(t, d);
      }
    fw.attn.push_back(softmax_with_bias(scores, bias));
    const SoftmaxResult& attn = fw.attn.back();

    const Tensor& v = fw.vhat.back();
    for (std::size_t t = 0; t < t_len; ++t) {
      if (attn.degenerate_rows[t]) {
        fw.all_missing[t] = 1;  // zero-latent policy: row stays zero
        continue;
      }
      double* out = fw.latent_cat.data.data() + t * (h * d_k) + i * d_k;
      for (std::size_t d = 0; d < n_; ++d) {
        const double w = attn.values.at(t, d);
        if (w == 0.0) continue;
        const double* vrow = v.data.data() + (t * n_ + d) * d_k;
        for (std::size_t j = 0; j < d_k; ++j) out[j] += w * vrow[j];
      }
    }
  }

  fw.attended = matmul(fw.latent_cat, p("wo"));
  if (cfg_.mode == LayerMode::Wrapper) {
    fw.output = affine(fw.attended, p("proj_w"), p("proj_b"));
  } else {
    fw.output = fw.attended;
  }
  (void)d_out;
  return fw;
}

Tensor MissTSMLayer::multihead_mfaa(const Tensor& z_t, const Tensor& m_t) const {
  if (z_t.rank() != 2 || z_t.shape[0] != n_ || z_t.shape[1] != cfg_.embed_dim) {
    throw std::invalid_argument("multihead_mfaa: expected " + std::to_string(n_) + " x " +
                                std::to_string(cfg_.embed_dim) + " token block, got " +
                                z_t.shape_str());
  }
  std::vector<Tensor> latents;
  latents.reserve(cfg_.heads);
  for (std::size_t i = 0; i < cfg_.heads; ++i) {
    const std::string hp = "h" + std::to_string(i) + ".";
    Tensor qhat = matmul(p("query"), p(hp + "wq"));
    Tensor khat = matmul(z_t, p(hp + "wk"));
    Tensor vhat = matmul(z_t, p(hp + "wv"));
    MfaaScoreResult score = mfaa_score(qhat, khat, m_t, cfg_.eta);
    latents.push_back(score.all_missing ? Tensor({cfg_.key_dim})
                                        : mfaa_latent(score.weights, vhat));
  }
  std::vector<const Tensor*> parts;
  for (const Tensor& l : latents) parts.push_back(&l);
  Tensor cat = concat_last(parts);
  Tensor cat_row({1, cat.size()}, cat.data);
  Tensor out = matmul(cat_row, p("wo"));
  return Tensor({out.size()}, out.data);
}

Tensor MissTSMLayer::backward(const Tensor& d_output, const Forward& fw) const {
  const std::size_t t_len = fw.X.shape[0];
  const std::size_t d_embed = cfg_.embed_dim, d_k = cfg_.key_dim, h = cfg_.heads;
  require_same_shape(d_output, fw.output, "misstsm backward");

  Tensor d_attended = d_output;
  if (cfg_.mode == LayerMode::Wrapper) {
    AffineGrads pg = affine_backward(d_output, fw.attended, p("proj_w"));
    Tensor& dpw = g("proj_w");
    Tensor& dpb = g("proj_b");
    for (std::size_t i = 0; i < dpw.size(); ++i) dpw.data[i] += pg.dw.data[i];
    for (std::size_t i = 0; i < dpb.size(); ++i) dpb.data[i] += pg.db.data[i];
    d_attended = std::move(pg.dx);
  }

  MatmulGrads wo_g = matmul_backward(d_attended, fw.latent_cat, p("wo"));
  {
    Tensor& dwo = g("wo");
    for (std::size_t i = 0; i < dwo.size(); ++i) dwo.data[i] += wo_g.db.data[i];
  }
  const Tensor& d_latent_cat = wo_g.da;  // T x (h*d_k)

  Tensor dz({t_len * n_, d_embed});
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_k));

  for (std::size_t i = 0; i < h; ++i) {
    const std::string hp = "h" + std::to_string(i) + ".";
    const Tensor& q = fw.qhat[i];
    const Tensor& k = fw.khat[i];
    const Tensor& v = fw.vhat[i];
    const SoftmaxResult& attn = fw.attn[i];

    // dL_i is the column slice of the concatenated latent gradient.
    // dA[t,d] = dL_i[t] . V[t,d,:]; dV[t,d,:] = A[t,d] * dL_i[t].
    Tensor da({t_len, n_});
    Tensor dv({t_len * n_, d_k});
    for (std::size_t t = 0; t < t_len; ++t) {
      if (attn.degenerate_rows[t]) continue;
      const double* dl = d_latent_cat.data.data() + t * (h * d_k) + i * d_k;
      for (std::size_t d = 0; d < n_; ++d) {
        const double* vrow = v.data.data() + (t * n_ + d) * d_k;
        double* dvrow = dv.data.data() + (t * n_ + d) * d_k;
        const double w = attn.values.at(t, d);
        double acc = 0.0;
        for (std::size_t j = 0; j < d_k; ++j) {
          acc += dl[j] * vrow[j];
          dvrow[j] = w * dl[j];
        }
        da.at(t, d) = acc;
      }
    }

    Tensor dscores = softmax_backward(da, attn);

    // scores[t,d] = (q . k[t,d]) * inv_sqrt
    Tensor dq({1, d_k});
    Tensor dk({t_len * n_, d_k});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t d = 0; d < n_; ++d) {
        const double ds = dscores.at(t, d) * inv_sqrt;
        if (ds == 0.0) continue;
        const double* krow = k.data.data() + (t * n_ + d) * d_k;
        double* dkrow = dk.data.data() + (t * n_ + d) * d_k;
        for (std::size_t j = 0; j < d_k; ++j) {
          dq.data[j] += ds * krow[j];
          dkrow[j] += ds * q.data[j];
        }
      }

    MatmulGrads qg = matmul_backward(dq, p("query"), p(hp + "wq"));
    MatmulGrads kg = matmul_backward(dk, fw.z, p(hp + "wk"));
    MatmulGrads vg = matmul_backward(dv, fw.z, p(hp + "wv"));

    Tensor& gq = g("query");
    for (std::size_t j = 0; j < gq.size(); ++j) gq.data[j] += qg.da.data[j];
    Tensor& gwq = g(hp + "wq");
    for (std::size_t j = 0; j < gwq.size(); ++j) gwq.data[j] += qg.db.data[j];
    Tensor& gwk = g(hp + "wk");
    for (std::size_t j = 0; j < gwk.size(); ++j) gwk.data[j] += kg.db.data[j];
    Tensor& gwv = g(hp + "wv");
    for (std::size_t j = 0; j < gwv.size(); ++j) gwv.data[j] += vg.db.data[j];
    for (std::size_t j = 0; j < dz.size(); ++j) {
      dz.data[j] += kg.da.data[j] + vg.da.data[j];
    }
  }

  // Through Z = TFI + PE (PE constant): observed tokens route to the
  // embedding parameters and the input; missing tokens contribute nothing.
  Tensor dx(fw.X.shape);
  Tensor& gw = g("tfi_w");
  Tensor& gb = g("tfi_b");
  const Tensor& w = p("tfi_w");
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t d = 0; d < n_; ++d) {
      if (fw.M.at(t, d) != 0.0) continue;
      const double x = fw.X.at(t, d);
      const double* dzrow = dz.data.data() + (t * n_ + d) * d_embed;
      double acc = 0.0;
      for (std::size_t j = 0; j < d_embed; ++j) {
        gw.data[j] += dzrow[j] * x;
        gb.data[j] += dzrow[j];
        acc += dzrow[j] * w.data[j];
      }
      dx.at(t, d) = acc;
    }
  return dx;
}

}  // namespace misstsm
