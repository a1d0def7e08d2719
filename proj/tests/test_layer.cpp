#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "misstsm/gradcheck.hpp"
#include "misstsm/kernels.hpp"
#include "misstsm/layer.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/rng.hpp"

using namespace misstsm;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

// Standard single-query multi-head cross-attention, written as the naive
// textbook loop. Serves as the oracle for the fully-observed case.
Tensor naive_cross_attention(const Tensor& z, const ParamStore& store, const MissTSMConfig& cfg,
                             const std::string& prefix) {
  const std::size_t n = z.shape[0], d_k = cfg.key_dim;
  std::vector<double> cat;
  for (std::size_t head = 0; head < cfg.heads; ++head) {
    const std::string hp = prefix + "h" + std::to_string(head) + ".";
    Tensor qhat = matmul(store.get(prefix + "query").value, store.get(hp + "wq").value);
    Tensor khat = matmul(z, store.get(hp + "wk").value);
    Tensor vhat = matmul(z, store.get(hp + "wv").value);
    std::vector<double> scores(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < n; ++d) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d_k; ++j) acc += qhat.data[j] * khat.at(d, j);
      scores[d] = acc / std::sqrt(static_cast<double>(d_k));
      mx = std::max(mx, scores[d]);
    }
    double zsum = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      zsum += s;
    }
    for (std::size_t j = 0; j < d_k; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < n; ++d) acc += (scores[d] / zsum) * vhat.at(d, j);
      cat.push_back(acc);
    }
  }
  Tensor cat_row({1, cat.size()}, cat);
  Tensor out = matmul(cat_row, store.get(prefix + "wo").value);
  return Tensor({out.size()}, out.data);
}

}  // namespace

TEST_CASE("tfi_embed maps scalars through the affine token map") {
  const std::size_t d_embed = 4;
  Tensor w = Tensor::full({d_embed, 1}, 1.0);
  Tensor b({d_embed});
  Tensor x({1, 1}, {0.5});
  Tensor m({1, 1}, {0.0});
  Tensor h = tfi_embed(x, m, w, b);
  CHECK(h.shape == std::vector<std::size_t>{1, 1, d_embed});
  for (std::size_t j = 0; j < d_embed; ++j) CHECK(h.data[j] == 0.5);
}

TEST_CASE("tfi_embed emits the zero dummy for missing tokens") {
  Rng rng = make_rng(3);
  Tensor w = random_tensor({6, 1}, rng);
  Tensor b = random_tensor({6}, rng);
  Tensor x({2, 2}, {1.0, 99.0, -3.0, 7.0});
  Tensor m({2, 2}, {0.0, 1.0, 0.0, 1.0});
  Tensor h = tfi_embed(x, m, w, b);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(h.at(0, 1, j) == 0.0);
    CHECK(h.at(1, 1, j) == 0.0);
  }

  // Perturbing only masked entries leaves the embedding bit-identical.
  Tensor x2 = x;
  x2.at(0, 1) = -1e9;
  x2.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
  Tensor h2 = tfi_embed(x2, m, w, b);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.data[i] == h2.data[i]);
}

TEST_CASE("pos_encode_2d matches direct evaluation") {
  Tensor pe = pos_encode_2d(3, 3, 4);

  // t=0: time half is [sin 0, cos 0] = [0, 1] for every variate.
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(pe.at(0, d, 0) == 0.0);
    CHECK(pe.at(0, d, 1) == 1.0);
  }

  // D=4, t=1, d=2: [sin 1, cos 1, sin 2, cos 2].
  CHECK(std::abs(pe.at(1, 2, 0) - std::sin(1.0)) <= 1e-12);
  CHECK(std::abs(pe.at(1, 2, 1) - std::cos(1.0)) <= 1e-12);
  CHECK(std::abs(pe.at(1, 2, 2) - std::sin(2.0)) <= 1e-12);
  CHECK(std::abs(pe.at(1, 2, 3) - std::cos(2.0)) <= 1e-12);
  CHECK(pe.at(1, 2, 0) == doctest::Approx(0.84147).epsilon(1e-4));
  CHECK(pe.at(1, 2, 1) == doctest::Approx(0.54030).epsilon(1e-4));
  CHECK(pe.at(1, 2, 2) == doctest::Approx(0.90930).epsilon(1e-4));
  CHECK(pe.at(1, 2, 3) == doctest::Approx(-0.41615).epsilon(1e-4));
}

TEST_CASE("pos_encode_2d halves depend on exactly one coordinate") {
  const std::size_t t_len = 5, n = 4, d_embed = 8;
  Tensor pe = pos_encode_2d(t_len, n, d_embed);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t d = 1; d < n; ++d)
      for (std::size_t j = 0; j < d_embed / 2; ++j) {
        CHECK(pe.at(t, d, j) == pe.at(t, 0, j));  // time half ignores d
      }
  for (std::size_t t = 1; t < t_len; ++t)
    for (std::size_t d = 0; d < n; ++d)
      for (std::size_t j = d_embed / 2; j < d_embed; ++j) {
        CHECK(pe.at(t, d, j) == pe.at(0, d, j));  // variate half ignores t
      }
  CHECK_THROWS_AS(pos_encode_2d(2, 2, 6), std::invalid_argument);
}

TEST_CASE("mfaa_score: masked softmax over the observed variates") {
  // d_k = 1 with unit query turns key values into raw scores.
  Tensor qhat({1}, {1.0});
  Tensor khat({3, 1}, {0.5, 1.0, 1.5});
  Tensor m({3}, {0.0, 1.0, 0.0});
  MfaaScoreResult r = mfaa_score(qhat, khat, m, kMaskBias);
  CHECK_FALSE(r.all_missing);
  const double z = std::exp(0.5) + std::exp(1.5);
  CHECK(r.weights.data[0] == doctest::Approx(std::exp(0.5) / z).epsilon(1e-12));
  CHECK(r.weights.data[1] == 0.0);
  CHECK(r.weights.data[2] == doctest::Approx(std::exp(1.5) / z).epsilon(1e-12));
  CHECK(r.weights.data[0] == doctest::Approx(0.26894).epsilon(1e-4));
  CHECK(r.weights.data[2] == doctest::Approx(0.73106).epsilon(1e-4));

  Tensor one_obs({3}, {1.0, 0.0, 1.0});
  MfaaScoreResult single = mfaa_score(qhat, khat, one_obs, kMaskBias);
  CHECK(single.weights.data[1] == 1.0);

  Tensor none({3}, {0.0, 0.0, 0.0});
  MfaaScoreResult open = mfaa_score(qhat, khat, none, kMaskBias);
  Tensor plain = softmax(Tensor({3}, {0.5, 1.0, 1.5}));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(open.weights.data[i] == doctest::Approx(plain.data[i]).epsilon(1e-14));
  }

  Tensor all({3}, {1.0, 1.0, 1.0});
  MfaaScoreResult degenerate = mfaa_score(qhat, khat, all, kMaskBias);
  CHECK(degenerate.all_missing);
  for (double v : degenerate.weights.data) CHECK(v == 0.0);
}

TEST_CASE("mfaa_latent is the attention-weighted value combination") {
  Tensor onehot({3}, {0.0, 1.0, 0.0});
  Tensor v({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor picked = mfaa_latent(onehot, v);
  CHECK(picked.data[0] == 3.0);
  CHECK(picked.data[1] == 4.0);

  Tensor uniform2({2}, {0.5, 0.5});
  Tensor v2({2, 2}, {2, 0, 0, 2});
  Tensor avg = mfaa_latent(uniform2, v2);
  CHECK(avg.data[0] == 1.0);
  CHECK(avg.data[1] == 1.0);

  Rng rng = make_rng(17);
  Tensor a = random_tensor({5}, rng, 0.0, 1.0);
  Tensor vv = random_tensor({5, 3}, rng);
  Tensor fast = mfaa_latent(a, vv);
  for (std::size_t j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < 5; ++d) acc += a.data[d] * vv.at(d, j);
    CHECK(std::abs(fast.data[j] - acc) <= 1e-12);
  }
}

TEST_CASE("multihead with one head and identity mixing equals the bare latent") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 1;
  cfg.out_dim = 4;
  ParamStore store;
  MissTSMLayer layer(cfg, 3, store, 5);
  Tensor& wo = store.get("misstsm.wo").value;
  std::fill(wo.data.begin(), wo.data.end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) wo.at(i, i) = 1.0;

  Rng rng = make_rng(23);
  Tensor z = random_tensor({3, 8}, rng);
  Tensor m({3}, {0.0, 1.0, 0.0});
  Tensor out = layer.multihead_mfaa(z, m);

  Tensor qhat = matmul(store.get("misstsm.query").value, store.get("misstsm.h0.wq").value);
  Tensor khat = matmul(z, store.get("misstsm.h0.wk").value);
  Tensor vhat = matmul(z, store.get("misstsm.h0.wv").value);
  Tensor latent = mfaa_latent(mfaa_score(qhat, khat, m, cfg.eta).weights, vhat);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(out.data[j] == doctest::Approx(latent.data[j]).epsilon(1e-14));
  }
}

TEST_CASE("swapping heads together with their mixing rows leaves the output unchanged") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 3;
  cfg.heads = 2;
  ParamStore sa, sb;
  MissTSMLayer la(cfg, 4, sa, 7);
  MissTSMLayer lb(cfg, 4, sb, 7);

  // Layer B: heads 0 and 1 exchanged, with the matching d_k-row blocks of Wo.
  sb.get("misstsm.h0.wq").value = sa.get("misstsm.h1.wq").value;
  sb.get("misstsm.h0.wk").value = sa.get("misstsm.h1.wk").value;
  sb.get("misstsm.h0.wv").value = sa.get("misstsm.h1.wv").value;
  sb.get("misstsm.h1.wq").value = sa.get("misstsm.h0.wq").value;
  sb.get("misstsm.h1.wk").value = sa.get("misstsm.h0.wk").value;
  sb.get("misstsm.h1.wv").value = sa.get("misstsm.h0.wv").value;
  Tensor& woa = sa.get("misstsm.wo").value;
  Tensor& wob = sb.get("misstsm.wo").value;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < woa.shape[1]; ++c) {
      wob.at(r, c) = woa.at(r + 3, c);
      wob.at(r + 3, c) = woa.at(r, c);
    }

  Rng rng = make_rng(29);
  Tensor z = random_tensor({4, 8}, rng);
  Tensor m({4}, {0.0, 1.0, 0.0, 0.0});
  Tensor oa = la.multihead_mfaa(z, m);
  Tensor ob = lb.multihead_mfaa(z, m);
  for (std::size_t j = 0; j < oa.size(); ++j) {
    CHECK(oa.data[j] == doctest::Approx(ob.data[j]).epsilon(1e-14));
  }
}

TEST_CASE("all-missing time-step yields the zero latent") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 2;
  ParamStore store;
  MissTSMLayer layer(cfg, 3, store, 9);
  Rng rng = make_rng(31);
  Tensor z = random_tensor({3, 8}, rng);
  Tensor m = Tensor::full({3}, 1.0);
  Tensor out = layer.multihead_mfaa(z, m);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("layer output shapes follow the mode") {
  Rng rng = make_rng(37);
  Tensor x = random_tensor({10, 5}, rng);
  Tensor m = gen_mcar(10, 5, 0.3, 99);

  MissTSMConfig direct;
  direct.embed_dim = 8;
  direct.key_dim = 4;
  direct.heads = 2;
  direct.out_dim = 12;
  ParamStore s1;
  MissTSMLayer l1(direct, 5, s1, 1);
  CHECK(l1.forward(x, m).output.shape == std::vector<std::size_t>{10, 12});

  MissTSMConfig wrapper = direct;
  wrapper.mode = LayerMode::Wrapper;
  ParamStore s2;
  MissTSMLayer l2(wrapper, 5, s2, 1);
  CHECK(l2.forward(x, m).output.shape == std::vector<std::size_t>{10, 5});
}

TEST_CASE("config validation rejects bad dimensions and weak eta") {
  MissTSMConfig bad;
  bad.embed_dim = 6;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.embed_dim = 8;
  bad.eta = -100.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.eta = -1e9;
  bad.validate();
}

TEST_CASE("missing-value invariance holds bit-for-bit end to end") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 2;
  cfg.mode = LayerMode::Wrapper;
  ParamStore store;
  MissTSMLayer layer(cfg, 6, store, 11);

  Rng rng = make_rng(41);
  Tensor x = random_tensor({12, 6}, rng);
  Tensor m = gen_mcar(12, 6, 0.4, 7);
  for (std::size_t d = 0; d < 6; ++d) m.at(3, d) = 1.0;  // one fully missing step

  Tensor x2 = x;
  for (std::size_t i = 0; i < x2.size(); ++i) {
    if (m.data[i] != 0.0) x2.data[i] = 1e6 + static_cast<double>(i);
  }
  Tensor x3 = x;
  for (std::size_t i = 0; i < x3.size(); ++i) {
    if (m.data[i] != 0.0) x3.data[i] = std::numeric_limits<double>::quiet_NaN();
  }

  MissTSMLayer::Forward fa = layer.forward(x, m);
  MissTSMLayer::Forward fb = layer.forward(x2, m);
  MissTSMLayer::Forward fc = layer.forward(x3, m);
  REQUIRE(fa.output.size() == fb.output.size());
  for (std::size_t i = 0; i < fa.output.size(); ++i) {
    CHECK(fa.output.data[i] == fb.output.data[i]);  // bitwise
    CHECK(fa.output.data[i] == fc.output.data[i]);
  }
  CHECK(fa.all_missing[3] == 1);
  CHECK(fa.all_missing[0] == 0);
}

TEST_CASE("attention rows normalize over observed variates only") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 2;
  ParamStore store;
  MissTSMLayer layer(cfg, 5, store, 13);
  Rng rng = make_rng(43);
  Tensor x = random_tensor({20, 5}, rng);
  Tensor m = gen_mcar(20, 5, 0.5, 3);

  MissTSMLayer::Forward fw = layer.forward(x, m);
  for (std::size_t head = 0; head < cfg.heads; ++head) {
    const SoftmaxResult& attn = fw.attn[head];
    for (std::size_t t = 0; t < 20; ++t) {
      double row_sum = 0.0;
      bool any_obs = false;
      for (std::size_t d = 0; d < 5; ++d) {
        const double w = attn.values.at(t, d);
        if (m.at(t, d) != 0.0) {
          CHECK(w == 0.0);  // exact zero on missing variates
        } else {
          any_obs = true;
        }
        row_sum += w;
      }
      if (any_obs) {
        CHECK(std::abs(row_sum - 1.0) <= 1e-12);
      } else {
        CHECK(row_sum == 0.0);
      }
    }
  }
}

TEST_CASE("fully observed layer equals naive cross-attention") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 2;
  ParamStore store;
  MissTSMLayer layer(cfg, 4, store, 19);
  Rng rng = make_rng(47);
  Tensor x = random_tensor({9, 4}, rng);
  Tensor m({9, 4});

  MissTSMLayer::Forward fw = layer.forward(x, m);
  for (std::size_t t = 0; t < 9; ++t) {
    Tensor z_t({4, cfg.embed_dim});
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
        z_t.at(d, j) = fw.z.at(t * 4 + d, j);
      }
    Tensor oracle = naive_cross_attention(z_t, store, cfg, "misstsm.");
    for (std::size_t j = 0; j < oracle.size(); ++j) {
      CHECK(std::abs(fw.output.at(t, j) - oracle.data[j]) <= 1e-12);
    }
  }
}

TEST_CASE("every time-step runs the identical shared-query attention") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 2;
  ParamStore store;
  MissTSMLayer layer(cfg, 4, store, 53);
  Rng rng = make_rng(59);
  Tensor x = random_tensor({7, 4}, rng);
  Tensor m = gen_mcar(7, 4, 0.3, 5);

  MissTSMLayer::Forward fw = layer.forward(x, m);
  for (std::size_t t = 0; t < 7; ++t) {
    Tensor z_t({4, cfg.embed_dim});
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t j = 0; j < cfg.embed_dim; ++j) z_t.at(d, j) = fw.z.at(t * 4 + d, j);
    Tensor m_t({4});
    for (std::size_t d = 0; d < 4; ++d) m_t.data[d] = m.at(t, d);
    Tensor per_step = layer.multihead_mfaa(z_t, m_t);
    for (std::size_t j = 0; j < per_step.size(); ++j) {
      CHECK(fw.output.at(t, j) == doctest::Approx(per_step.data[j]).epsilon(1e-14));
    }
  }
}

TEST_CASE("layer gradients agree with finite differences across every parameter") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 2;
  cfg.mode = LayerMode::Wrapper;
  ParamStore store;
  MissTSMLayer layer(cfg, 4, store, 61);

  Rng rng = make_rng(67);
  Tensor x = random_tensor({6, 4}, rng);
  Tensor m = gen_mcar(6, 4, 0.35, 77);
  Tensor weights;

  {
    MissTSMLayer::Forward probe = layer.forward(x, m);
    weights = random_tensor(probe.output.shape, rng);
  }
  auto loss_with = [&](const Tensor& xin) {
    MissTSMLayer::Forward fw = layer.forward(xin, m);
    return mean(mul(fw.output, weights));
  };

  store.zero_grads();
  MissTSMLayer::Forward fw = layer.forward(x, m);
  Tensor d_out = weights;
  for (double& v : d_out.data) v /= static_cast<double>(fw.output.size());
  Tensor dx = layer.backward(d_out, fw);

  // Input gradient: finite differences, and exact zero at masked entries.
  CHECK(finite_diff_check(loss_with, x, dx).max_rel_err <= 1e-4);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.data[i] != 0.0) CHECK(dx.data[i] == 0.0);
  }

  // Parameter gradients, one store slot at a time.
  for (auto& [name, slot] : store.slots()) {
    auto f = [&, pname = name](const Tensor& probe) {
      Tensor saved = store.get(pname).value;
      store.get(pname).value = probe;
      MissTSMLayer::Forward pf = layer.forward(x, m);
      double loss = mean(mul(pf.output, weights));
      store.get(pname).value = saved;
      return loss;
    };
    GradCheckResult res = finite_diff_check(f, slot.value, slot.grad);
    INFO("parameter ", name);
    CHECK(res.max_rel_err <= 1e-4);
  }
}

TEST_CASE("tfi freeze pins the token map to the identity broadcast") {
  MissTSMConfig cfg;
  cfg.embed_dim = 8;
  cfg.key_dim = 4;
  cfg.heads = 1;
  ParamStore store;
  MissTSMLayer layer(cfg, 3, store, 71);
  layer.freeze_tfi_identity();

  const ParamSlot& w = store.get("misstsm.tfi_w");
  const ParamSlot& b = store.get("misstsm.tfi_b");
  for (double v : w.value.data) CHECK(v == 1.0);
  for (double v : b.value.data) CHECK(v == 0.0);
  CHECK_FALSE(w.trainable);
  CHECK_FALSE(b.trainable);

  // An optimizer sweep leaves the frozen slots untouched.
  store.get("misstsm.tfi_w").grad.data[0] = 1.0;
  AdamConfig adam;
  store.step_all(adam);
  CHECK(store.get("misstsm.tfi_w").value.data[0] == 1.0);
  CHECK(store.get("misstsm.tfi_w").grad.data[0] == 0.0);
}
