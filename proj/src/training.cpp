#include "misstsm/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "misstsm/rng.hpp"

namespace misstsm {

namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::size_t> pick_visible(std::size_t t_len, double mask_ratio, Rng& rng) {
  const std::size_t hidden = static_cast<std::size_t>(mask_ratio * static_cast<double>(t_len));
  std::size_t keep = t_len - std::min(hidden, t_len);
  if (keep == 0) keep = 1;  // the encoder needs at least one token
  std::vector<std::size_t> order = shuffled_indices(t_len, rng);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  if (mae_time_mask_ratio < 0.0 || mae_time_mask_ratio >= 1.0) {
    throw std::invalid_argument("train config: mae_time_mask_ratio must lie in [0,1)");
  }
  if (early_stop_patience == 0) {
    throw std::invalid_argument("train config: early_stop_patience must be >= 1");
  }
  if (batch == 0) throw std::invalid_argument("train config: batch must be >= 1");
  if (pretrain_lr <= 0.0 || finetune_lr <= 0.0) {
    throw std::invalid_argument("train config: learning rates must be positive");
  }
}

namespace {

BackboneConfig derive_backbone(const ModelConfig& cfg) {
  BackboneConfig bb = cfg.backbone;
  bb.input_dim = cfg.use_misstsm ? cfg.layer.output_dim() : cfg.n_variates;
  bb.recon_dim = cfg.n_variates;
  return bb;
}

MissTSMConfig derive_layer(const ModelConfig& cfg) {
  MissTSMConfig lc = cfg.layer;
  lc.mode = LayerMode::Direct;
  return lc;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<ParamStore>()), backbone_([&]() -> MaeBackbone {
        if (cfg_.n_variates == 0) {
          throw std::invalid_argument("model config: n_variates must be positive");
        }
        cfg_.backbone = derive_backbone(cfg_);
        if (cfg_.use_misstsm) {
          cfg_.layer = derive_layer(cfg_);
          layer_.emplace(cfg_.layer, cfg_.n_variates, *store_, derive_seed(seed, 1));
        }
        return MaeBackbone(cfg_.backbone, *store_, derive_seed(seed, 2));
      }()) {
  Rng rng = make_rng(derive_seed(seed, 3));
  const std::size_t dim = cfg_.backbone.model_dim;
  if (cfg_.horizon > 0) {
    if (cfg_.context_len == 0) {
      throw std::invalid_argument("model config: forecasting needs context_len");
    }
    store_->add("head.forecast.w",
               glorot_uniform({cfg_.context_len * dim, cfg_.horizon * cfg_.n_variates}, rng));
    store_->add("head.forecast.b", Tensor({cfg_.horizon * cfg_.n_variates}));
  }
  if (cfg_.n_classes > 0) {
    store_->add("head.cls1.w", glorot_uniform({dim, 64}, rng));
    store_->add("head.cls1.b", Tensor({64}));
    store_->add("head.cls2.w", glorot_uniform({64, cfg_.n_classes}, rng));
    store_->add("head.cls2.b", Tensor({cfg_.n_classes}));
  }
}

Model::Model(ModelConfig cfg, ParamStore store)
    : cfg_(cfg), store_(std::make_unique<ParamStore>(std::move(store))), backbone_([&]() -> MaeBackbone {
        cfg_.backbone = derive_backbone(cfg_);
        if (cfg_.use_misstsm) {
          cfg_.layer = derive_layer(cfg_);
          layer_.emplace(cfg_.layer, cfg_.n_variates, *store_, std::string("misstsm."));
        }
        return MaeBackbone(cfg_.backbone, *store_, std::string("backbone."));
      }()) {}

Model::TokensCache Model::tokens_forward(const Tensor& values, const Tensor& mask) const {
  TokensCache cache;
  if (layer_) {
    cache.layer_fw = layer_->forward(values, mask);
    cache.tokens = cache.layer_fw->output;
  } else {
    cache.tokens = values;
  }
  return cache;
}

void Model::tokens_backward(const Tensor& d_tokens, const TokensCache& cache) const {
  if (layer_ && cache.layer_fw) layer_->backward(d_tokens, *cache.layer_fw);
}

Tensor Model::predict_forecast(const Tensor& ctx_values, const Tensor& ctx_mask) const {
  if (cfg_.horizon == 0) throw std::logic_error("model has no forecasting head");
  TokensCache tokens = tokens_forward(ctx_values, ctx_mask);
  MaeBackbone::EncodeCache enc =
      backbone_.encode(tokens.tokens, MaeBackbone::all_visible(tokens.tokens.shape[0]));
  Tensor flat({1, enc.enc_out.size()}, enc.enc_out.data);
  Tensor pred = affine(flat, store_->get("head.forecast.w").value,
                       store_->get("head.forecast.b").value);
  return Tensor({cfg_.horizon, cfg_.n_variates}, pred.data);
}

Tensor Model::predict_classify(const Tensor& values, const Tensor& mask) const {
  if (cfg_.n_classes == 0) throw std::logic_error("model has no classification head");
  TokensCache tokens = tokens_forward(values, mask);
  MaeBackbone::EncodeCache enc =
      backbone_.encode(tokens.tokens, MaeBackbone::all_visible(tokens.tokens.shape[0]));
  Tensor pooled = mean_rows(enc.enc_out);
  Tensor pooled_row({1, pooled.size()}, pooled.data);
  Tensor hidden =
      relu(affine(pooled_row, store_->get("head.cls1.w").value, store_->get("head.cls1.b").value));
  Tensor logits =
      affine(hidden, store_->get("head.cls2.w").value, store_->get("head.cls2.b").value);
  return softmax(Tensor({logits.size()}, logits.data));
}

namespace {

// One pretraining pass over a window: MissTSM tokens -> masked encode ->
// decode all positions -> MSE on originally observed entries. upstream > 0
// also runs the backward pass with that loss weight.
double pretrain_window(Model& model, const WindowPair& w,
                       const std::vector<std::size_t>& visible, double upstream) {
  Tensor observed(w.context_mask.shape);
  for (std::size_t i = 0; i < observed.size(); ++i) {
    observed.data[i] = 1.0 - w.context_mask.data[i];
  }
  Model::TokensCache tokens = model.tokens_forward(w.context_values, w.context_mask);
  const MaeBackbone& bb = model.backbone();
  MaeBackbone::EncodeCache enc = bb.encode(tokens.tokens, visible);
  MaeBackbone::DecodeCache dec = bb.decode(enc);
  const double loss = mse_masked(dec.recon, w.context_values, observed);
  if (upstream > 0.0) {
    Tensor d_recon = mse_masked_backward(dec.recon, w.context_values, observed, upstream);
    Tensor d_enc_out = bb.decode_backward(d_recon, dec, enc);
    Tensor d_tokens = bb.encode_backward(d_enc_out, enc);
    model.tokens_backward(d_tokens, tokens);
  }
  return loss;
}

double forecast_window(Model& model, const WindowPair& w, double upstream) {
  ParamStore& store = model.params();
  Model::TokensCache tokens = model.tokens_forward(w.context_values, w.context_mask);
  const MaeBackbone& bb = model.backbone();
  MaeBackbone::EncodeCache enc =
      bb.encode(tokens.tokens, MaeBackbone::all_visible(tokens.tokens.shape[0]));
  Tensor flat({1, enc.enc_out.size()}, enc.enc_out.data);
  const Tensor& hw = store.get("head.forecast.w").value;
  Tensor pred_flat = affine(flat, hw, store.get("head.forecast.b").value);
  Tensor pred(w.target.shape, pred_flat.data);

  double total_observed = 0.0;
  for (double v : w.target_observed.data) total_observed += v;
  if (total_observed == 0.0) return -1.0;  // nothing to learn from this window

  const double loss = mse_masked(pred, w.target, w.target_observed);
  if (upstream > 0.0) {
    Tensor d_pred = mse_masked_backward(pred, w.target, w.target_observed, upstream);
    Tensor d_pred_row({1, d_pred.size()}, d_pred.data);
    AffineGrads hg = affine_backward(d_pred_row, flat, hw);
    Tensor& gw = store.get("head.forecast.w").grad;
    Tensor& gb = store.get("head.forecast.b").grad;
    for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += hg.dw.data[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += hg.db.data[i];
    Tensor d_enc_out(enc.enc_out.shape, hg.dx.data);
    Tensor d_tokens = bb.encode_backward(d_enc_out, enc);
    model.tokens_backward(d_tokens, tokens);
  }
  return loss;
}

double classify_segment(Model& model, const LabeledSegment& seg, double upstream) {
  ParamStore& store = model.params();
  Model::TokensCache tokens = model.tokens_forward(seg.series.values, seg.series.mask);
  const MaeBackbone& bb = model.backbone();
  MaeBackbone::EncodeCache enc =
      bb.encode(tokens.tokens, MaeBackbone::all_visible(tokens.tokens.shape[0]));
  Tensor pooled = mean_rows(enc.enc_out);
  Tensor pooled_row({1, pooled.size()}, pooled.data);
  Tensor pre = affine(pooled_row, store.get("head.cls1.w").value,
                      store.get("head.cls1.b").value);
  Tensor hidden = relu(pre);
  Tensor logits =
      affine(hidden, store.get("head.cls2.w").value, store.get("head.cls2.b").value);
  Tensor logits_vec({logits.size()}, logits.data);
  const double loss = cross_entropy_with_logits(logits_vec, seg.label);

  if (upstream > 0.0) {
    Tensor d_logits = cross_entropy_with_logits_backward(logits_vec, seg.label, upstream);
    Tensor d_logits_row({1, d_logits.size()}, d_logits.data);
    AffineGrads g2 = affine_backward(d_logits_row, hidden, store.get("head.cls2.w").value);
    Tensor& gw2 = store.get("head.cls2.w").grad;
    Tensor& gb2 = store.get("head.cls2.b").grad;
    for (std::size_t i = 0; i < gw2.size(); ++i) gw2.data[i] += g2.dw.data[i];
    for (std::size_t i = 0; i < gb2.size(); ++i) gb2.data[i] += g2.db.data[i];
    Tensor d_hidden = relu_backward(g2.dx, pre);
    AffineGrads g1 = affine_backward(d_hidden, pooled_row, store.get("head.cls1.w").value);
    Tensor& gw1 = store.get("head.cls1.w").grad;
    Tensor& gb1 = store.get("head.cls1.b").grad;
    for (std::size_t i = 0; i < gw1.size(); ++i) gw1.data[i] += g1.dw.data[i];
    for (std::size_t i = 0; i < gb1.size(); ++i) gb1.data[i] += g1.db.data[i];
    Tensor d_pooled({g1.dx.shape[1]}, g1.dx.data);
    Tensor d_enc_out = mean_rows_backward(d_pooled, enc.enc_out.shape[0]);
    Tensor d_tokens = bb.encode_backward(d_enc_out, enc);
    model.tokens_backward(d_tokens, tokens);
  }
  return loss;
}

struct FreezeGuard {
  ParamStore& store;
  std::map<std::string, bool> saved;
  FreezeGuard(ParamStore& s, bool freeze_non_heads) : store(s) {
    if (!freeze_non_heads) return;
    for (auto& [name, slot] : store.slots()) {
      saved[name] = slot.trainable;
      if (name.rfind("head.", 0) != 0) slot.trainable = false;
    }
  }
  ~FreezeGuard() {
    for (auto& [name, trainable] : saved) store.get(name).trainable = trainable;
  }
};

}  // namespace

PretrainResult pretrain_mae(Model& model, const std::vector<WindowPair>& train,
                            const std::vector<WindowPair>& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("pretrain_mae: no training windows");
  PretrainResult result;
  AdamConfig adam;
  adam.lr = cfg.pretrain_lr;
  Rng order_rng = make_rng(derive_seed(cfg.seed, 101));
  Rng mask_rng = make_rng(derive_seed(cfg.seed, 102));

  ParamStore& store = model.params();
  store.zero_grads();
  std::map<std::string, Tensor> last_good = snapshot_values(store);

  for (std::size_t epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = shuffled_indices(train.size(), order_rng);
    double train_loss = 0.0;
    std::size_t done = 0;
    try {
      while (done < order.size()) {
        const std::size_t batch_end = std::min(done + cfg.batch, order.size());
        const double upstream = 1.0 / static_cast<double>(batch_end - done);
        for (std::size_t i = done; i < batch_end; ++i) {
          const WindowPair& w = train[order[i]];
          std::vector<std::size_t> visible =
              pick_visible(w.context_values.shape[0], cfg.mae_time_mask_ratio, mask_rng);
          train_loss += pretrain_window(model, w, visible, upstream);
        }
        store.step_all(adam);
        done = batch_end;
      }
    } catch (const std::runtime_error&) {
      // Non-finite gradients abort the optimizer; roll back to the last
      // epoch that finished cleanly.
      restore_values(store, last_good);
      store.zero_grads();
      result.aborted_on_nan = true;
      break;
    }
    train_loss /= static_cast<double>(order.size());

    double val_loss = 0.0;
    if (!val.empty()) {
      Rng val_rng = make_rng(derive_seed(cfg.seed, 9000 + epoch));
      for (const WindowPair& w : val) {
        std::vector<std::size_t> visible =
            pick_visible(w.context_values.shape[0], cfg.mae_time_mask_ratio, val_rng);
        val_loss += pretrain_window(model, w, visible, 0.0);
      }
      val_loss /= static_cast<double>(val.size());
    }

    result.log.push_back({epoch, train_loss, val_loss, elapsed_seconds(start)});
    if (!std::isfinite(train_loss) || (!val.empty() && !std::isfinite(val_loss))) {
      restore_values(store, last_good);
      result.aborted_on_nan = true;
      break;
    }
    last_good = snapshot_values(store);
  }
  return result;
}

namespace {

template <typename Sample>
FinetuneResult finetune_loop(Model& model, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainConfig& cfg,
                             double (*step)(Model&, const Sample&, double)) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("finetune: no training samples");
  FinetuneResult result;
  AdamConfig adam;
  adam.lr = cfg.finetune_lr;
  Rng order_rng = make_rng(derive_seed(cfg.seed, 201));

  ParamStore& store = model.params();
  store.zero_grads();
  FreezeGuard guard(store, cfg.freeze_encoder_finetune);

  std::map<std::string, Tensor> best = snapshot_values(store);
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, bad_epochs = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs_finetune; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = shuffled_indices(train.size(), order_rng);
    double train_loss = 0.0;
    std::size_t counted = 0, done = 0;
    while (done < order.size()) {
      const std::size_t batch_end = std::min(done + cfg.batch, order.size());
      const double upstream = 1.0 / static_cast<double>(batch_end - done);
      for (std::size_t i = done; i < batch_end; ++i) {
        const double loss = step(model, train[order[i]], upstream);
        if (loss >= 0.0) {
          train_loss += loss;
          ++counted;
        }
      }
      store.step_all(adam);
      done = batch_end;
    }
    if (counted) train_loss /= static_cast<double>(counted);

    double val_loss = 0.0;
    std::size_t val_counted = 0;
    for (const Sample& s : val) {
      const double loss = step(model, s, 0.0);
      if (loss >= 0.0) {
        val_loss += loss;
        ++val_counted;
      }
    }
    if (val_counted) val_loss /= static_cast<double>(val_counted);

    result.log.push_back({epoch, train_loss, val_loss, elapsed_seconds(start)});
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      restore_values(store, best);
      break;
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best = snapshot_values(store);
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.early_stop_patience) {
      break;
    }
  }
  restore_values(store, best);  // minimum-validation checkpoint, not the last one
  result.best_epoch = best_epoch;
  result.best_val = best_val;
  return result;
}

}  // namespace

FinetuneResult finetune_forecast(Model& model, const std::vector<WindowPair>& train,
                                 const std::vector<WindowPair>& val, const TrainConfig& cfg) {
  if (model.config().horizon == 0) throw std::logic_error("model has no forecasting head");
  return finetune_loop<WindowPair>(model, train, val, cfg, &forecast_window);
}

FinetuneResult finetune_classify(Model& model, const std::vector<LabeledSegment>& train,
                                 const std::vector<LabeledSegment>& val, const TrainConfig& cfg) {
  if (model.config().n_classes == 0) throw std::logic_error("model has no classification head");
  return finetune_loop<LabeledSegment>(model, train, val, cfg, &classify_segment);
}

double constant_mean_mse(const std::vector<WindowPair>& train_windows,
                         const std::vector<WindowPair>& test_windows) {
  if (test_windows.empty()) throw std::invalid_argument("constant_mean_mse: no test windows");
  const std::size_t n = test_windows.front().target.shape[1];
  std::vector<double> mean(n, 0.0), count(n, 0.0);
  for (const WindowPair& w : train_windows) {
    for (std::size_t t = 0; t < w.context_values.shape[0]; ++t)
      for (std::size_t d = 0; d < n; ++d) {
        if (w.context_mask.at(t, d) == 0.0) {
          mean[d] += w.context_values.at(t, d);
          count[d] += 1.0;
        }
      }
  }
  for (std::size_t d = 0; d < n; ++d) mean[d] = count[d] > 0.0 ? mean[d] / count[d] : 0.0;

  double num = 0.0, den = 0.0;
  for (const WindowPair& w : test_windows) {
    for (std::size_t t = 0; t < w.target.shape[0]; ++t)
      for (std::size_t d = 0; d < n; ++d) {
        if (w.target_observed.at(t, d) != 0.0) {
          const double diff = mean[d] - w.target.at(t, d);
          num += diff * diff;
          den += 1.0;
        }
      }
  }
  if (den == 0.0) throw std::runtime_error("constant_mean_mse: no observed targets");
  return num / den;
}

}  // namespace misstsm
