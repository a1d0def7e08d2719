#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "misstsm/backbone.hpp"
#include "misstsm/dataio.hpp"
#include "misstsm/layer.hpp"
#include "misstsm/optim.hpp"

namespace misstsm {

struct TrainConfig {
  double pretrain_lr = 1e-3;
  double finetune_lr = 1e-4;
  std::size_t epochs_pretrain = 50;
  std::size_t epochs_finetune = 50;
  std::size_t early_stop_patience = 3;
  std::size_t batch = 16;
  double mae_time_mask_ratio = 0.5;
  std::uint64_t seed = 0;
  bool freeze_encoder_finetune = false;

  void validate() const;
};

struct ModelConfig {
  bool use_misstsm = true;        // false: tokens are the raw dense rows
  MissTSMConfig layer;            // mode is forced to Direct when used here
  BackboneConfig backbone;        // input_dim/recon_dim are derived, not set by callers
  std::size_t n_variates = 0;
  std::size_t context_len = 0;    // L
  std::size_t horizon = 0;        // S; > 0 registers the forecasting head
  std::size_t n_classes = 0;      // C; > 0 registers the classification head
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

// MissTSM front end (optional) + MAE backbone + task heads over one ParamStore.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  // Attach to parameters restored from a checkpoint.
  Model(ModelConfig cfg, ParamStore store);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }

  struct TokensCache {
    std::optional<MissTSMLayer::Forward> layer_fw;
    Tensor tokens;
  };
  TokensCache tokens_forward(const Tensor& values, const Tensor& mask) const;
  // Routes d_tokens through the front end; no-op on the raw-token path.
  void tokens_backward(const Tensor& d_tokens, const TokensCache& cache) const;

  Tensor predict_forecast(const Tensor& ctx_values, const Tensor& ctx_mask) const;  // S x N
  Tensor predict_classify(const Tensor& values, const Tensor& mask) const;          // C probs

  const MaeBackbone& backbone() const { return backbone_; }
  const std::optional<MissTSMLayer>& layer() const { return layer_; }
  MissTSMLayer* mutable_layer() { return layer_ ? &*layer_ : nullptr; }

 private:
  friend struct TrainerAccess;
  ModelConfig cfg_;
  // Heap-held so layer_/backbone_ pointers into it survive moves of Model.
  std::unique_ptr<ParamStore> store_;
  std::optional<MissTSMLayer> layer_;
  MaeBackbone backbone_;
};

struct PretrainResult {
  std::vector<EpochLog> log;
  bool aborted_on_nan = false;
};

struct FinetuneResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

PretrainResult pretrain_mae(Model& model, const std::vector<WindowPair>& train,
                            const std::vector<WindowPair>& val, const TrainConfig& cfg);

FinetuneResult finetune_forecast(Model& model, const std::vector<WindowPair>& train,
                                 const std::vector<WindowPair>& val, const TrainConfig& cfg);

FinetuneResult finetune_classify(Model& model, const std::vector<LabeledSegment>& train,
                                 const std::vector<LabeledSegment>& val, const TrainConfig& cfg);

// Mean squared error of a per-variate constant predictor (the observed train
// mean), the reference point for "did the model learn anything".
double constant_mean_mse(const std::vector<WindowPair>& train_windows,
                         const std::vector<WindowPair>& test_windows);

}  // namespace misstsm
