#pragma once

#include <cstdint>
#include <vector>

#include "misstsm/kernels.hpp"
#include "misstsm/optim.hpp"
#include "misstsm/tensor.hpp"

namespace misstsm {

// Wrapper mode projects the attended latent back to the input width N so the
// layer can sit in front of any dense-input model; direct mode hands the
// latent straight to a backbone that was built for it.
enum class LayerMode { Wrapper, Direct };

struct MissTSMConfig {
  std::size_t embed_dim = 8;  // D; must be divisible by 4 for the 2D encoding
  std::size_t key_dim = 8;    // d_k, per head
  std::size_t heads = 2;
  std::size_t out_dim = 0;  // D_o; 0 means "same as embed_dim"
  LayerMode mode = LayerMode::Direct;
  double eta = kMaskBias;

  std::size_t output_dim() const { return out_dim ? out_dim : embed_dim; }
  void validate() const;
};

// ---- spec'd building blocks, each independently testable ----

// Per-(time, variate) scalar token -> D-vector. Missing tokens get the fixed
// zero dummy embedding, so their stored sentinel can never leak through.
Tensor tfi_embed(const Tensor& X, const Tensor& M, const Tensor& tfi_weight,
                 const Tensor& tfi_bias);

// Sinusoidal grid encoding: the first D/2 channels encode the time index, the
// last D/2 the variate index.
Tensor pos_encode_2d(std::size_t T, std::size_t N, std::size_t D);

struct MfaaScoreResult {
  Tensor weights;  // [N], exact 0 at missing variates
  bool all_missing = false;
};

// Attention row for one time-step: softmax(qhat . khat_t^T / sqrt(d_k) + eta*M_t).
MfaaScoreResult mfaa_score(const Tensor& qhat, const Tensor& khat_t, const Tensor& m_t,
                           double eta);

// L_t = A_t . Vhat_t, a convex combination of the observed value rows.
Tensor mfaa_latent(const Tensor& a_t, const Tensor& vhat_t);

// ---- the full layer ----

class MissTSMLayer {
 public:
  MissTSMLayer(MissTSMConfig cfg, std::size_t n_variates, ParamStore& store,
               std::uint64_t seed, std::string prefix = "misstsm.");

  // Attaches to parameters already present in the store (checkpoint load).
  MissTSMLayer(MissTSMConfig cfg, std::size_t n_variates, ParamStore& store,
               std::string prefix);

  struct Forward {
    Tensor output;                           // T x N (wrapper) or T x D_o (direct)
    std::vector<std::uint8_t> all_missing;   // per time-step degeneracy flags
    // caches for the backward pass
    Tensor X, M;
    Tensor z;                                // (T*N) x D, embedding + positional
    std::vector<Tensor> qhat;                // per head, 1 x d_k
    std::vector<Tensor> khat, vhat;          // per head, (T*N) x d_k
    std::vector<SoftmaxResult> attn;         // per head, T x N rows
    Tensor latent_cat;                       // T x (h*d_k)
    Tensor attended;                         // T x D_o, before wrapper projection
  };

  Forward forward(const Tensor& X, const Tensor& M) const;

  // Accumulates parameter gradients into the store; returns dL/dX, which is
  // exactly zero at masked entries by construction.
  Tensor backward(const Tensor& d_output, const Forward& fw) const;

  // Single-time-step convenience used by the attention unit tests.
  Tensor multihead_mfaa(const Tensor& z_t, const Tensor& m_t) const;

  // Freezes the token embedding to the identity broadcast (weight=1, bias=0).
  void freeze_tfi_identity();

  const MissTSMConfig& config() const { return cfg_; }
  std::size_t variates() const { return n_; }
  const std::string& prefix() const { return prefix_; }

 private:
  void register_params(std::uint64_t seed);
  const Tensor& p(const std::string& name) const { return store_->get(prefix_ + name).value; }
  Tensor& g(const std::string& name) const { return store_->get(prefix_ + name).grad; }

  MissTSMConfig cfg_;
  std::size_t n_;
  ParamStore* store_;
  std::string prefix_;
};

}  // namespace misstsm
