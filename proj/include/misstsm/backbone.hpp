#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "misstsm/kernels.hpp"
#include "misstsm/optim.hpp"
#include "misstsm/tensor.hpp"

namespace misstsm {

struct BackboneConfig {
  std::size_t model_dim = 8;  // token width inside the transformer; even, divisible by heads
  std::size_t n_enc = 2;
  std::size_t n_dec = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 16;
  std::size_t input_dim = 8;  // width of incoming tokens
  std::size_t recon_dim = 1;  // width of the reconstruction target (N variates)

  void validate() const;
};

// 1D sinusoidal time encoding, the classic interleaved sin/cos table.
Tensor pos_encode_1d(std::size_t T, std::size_t dim);

// Pre-LN transformer encoder-decoder trained as a masked autoencoder:
// a random subset of time-step tokens is hidden from the encoder and the
// decoder reconstructs the full sequence.
class MaeBackbone {
 public:
  MaeBackbone(BackboneConfig cfg, ParamStore& store, std::uint64_t seed,
              std::string prefix = "backbone.");
  MaeBackbone(BackboneConfig cfg, ParamStore& store, std::string prefix);

  struct BlockCache {
    LayerNormCache ln1, ln2;
    Tensor x_in, x_ln;
    Tensor q, k, v;                  // T x dim after projection
    std::vector<SoftmaxResult> attn; // per head, T x T rows
    Tensor heads_cat;                // T x dim before the output mix
    Tensor after_attn;               // residual sum
    Tensor y_ln;
    Tensor ff_pre, ff_act;
  };

  struct EncodeCache {
    Tensor tokens_in;                  // raw input tokens
    Tensor projected;                  // after proj_in + positional encoding
    std::vector<std::size_t> visible;  // ascending time indices the encoder saw
    Tensor enc_in;                     // visible rows only
    std::vector<BlockCache> blocks;
    LayerNormCache final_ln;
    Tensor enc_out;                    // V x dim, after the final norm
  };

  struct DecodeCache {
    Tensor dec_in;  // T x dim, scattered encoder outputs + mask tokens + PE
    std::vector<BlockCache> blocks;
    LayerNormCache final_ln;
    Tensor dec_normed;
    Tensor recon;  // T x recon_dim
  };

  // visible lists the time steps shown to the encoder (ascending, nonempty).
  EncodeCache encode(const Tensor& tokens, const std::vector<std::size_t>& visible) const;
  // d_enc_out flows back through the encoder; returns gradient w.r.t. tokens.
  Tensor encode_backward(const Tensor& d_enc_out, const EncodeCache& cache) const;

  DecodeCache decode(const EncodeCache& enc) const;
  // Returns the gradient w.r.t. enc_out; token gradient is accumulated into
  // d_tokens (same shape as the encode input) because the decoder also sees
  // the positional scatter of encoder outputs.
  Tensor decode_backward(const Tensor& d_recon, const DecodeCache& dec, const EncodeCache& enc)
      const;

  const BackboneConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

  // All time steps visible; used by the fine-tuning heads.
  static std::vector<std::size_t> all_visible(std::size_t T);

 private:
  void register_params(std::uint64_t seed);
  const Tensor& p(const std::string& name) const { return store_->get(prefix_ + name).value; }
  Tensor& g(const std::string& name) const { return store_->get(prefix_ + name).grad; }

  Tensor run_block(const std::string& bp, const Tensor& x, BlockCache& cache) const;
  Tensor run_block_backward(const std::string& bp, const Tensor& dy, const BlockCache& cache)
      const;

  BackboneConfig cfg_;
  ParamStore* store_;
  std::string prefix_;
};

}  // namespace misstsm
