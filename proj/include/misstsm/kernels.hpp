#pragma once

#include <cstdint>
#include <vector>

#include "misstsm/tensor.hpp"

namespace misstsm {

// Additive biases at or below this threshold count as fully masked: a row
// whose every entry of (scores + bias) falls under it has no finite support
// and softmax_with_bias returns zeros for it instead of NaN.
// Additive bias that removes an attention slot: exp(x + kMaskBias) underflows
// to exactly 0.0 for any score |x| < 1e3, so masked slots cannot leak.
constexpr double kMaskBias = -1e9;
constexpr double kMaskedRowThreshold = -1e8;

// ---------------------------------------------------------------------------
// Matrix product, 2D only. Backward: dA = dC.B^T, dB = A^T.dC.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor da;
  Tensor db;
};
MatmulGrads matmul_backward(const Tensor& dc, const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Softmax over the last axis of (scores + bias), max-stabilized.
// bias must either match scores' shape or be a vector over the last axis.
// Rows where every biased score <= kMaskedRowThreshold come back all-zero and
// flagged; the caller decides what a fully-masked row means.
// ---------------------------------------------------------------------------

struct SoftmaxResult {
  Tensor values;
  std::vector<std::uint8_t> degenerate_rows;
  bool any_degenerate = false;
};

SoftmaxResult softmax_with_bias(const Tensor& scores, const Tensor& bias);

// dscores given upstream gradient; degenerate rows yield zero gradient.
Tensor softmax_backward(const Tensor& dout, const SoftmaxResult& fw);

Tensor softmax(const Tensor& scores);  // convenience: zero bias

// ---------------------------------------------------------------------------
// Mean squared error over entries with observed == 1.
// ---------------------------------------------------------------------------

double mse_masked(const Tensor& pred, const Tensor& target, const Tensor& observed);
Tensor mse_masked_backward(const Tensor& pred, const Tensor& target, const Tensor& observed,
                           double upstream = 1.0);

// ---------------------------------------------------------------------------
// Elementwise ops.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

struct MulGrads {
  Tensor da;
  Tensor db;
};
MulGrads mul_backward(const Tensor& dc, const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& dy, const Tensor& x);

Tensor gelu(const Tensor& x);  // exact erf form
Tensor gelu_backward(const Tensor& dy, const Tensor& x);

// ---------------------------------------------------------------------------
// Affine map y = x.W + b with x [M x K], W [K x P], b [P].
// ---------------------------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

struct AffineGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};
AffineGrads affine_backward(const Tensor& dy, const Tensor& x, const Tensor& w);

// ---------------------------------------------------------------------------
// Layer normalization over the last axis with learned gain/shift.
// ---------------------------------------------------------------------------

struct LayerNormCache {
  Tensor xhat;                  // normalized input, same shape as x
  std::vector<double> inv_std;  // one per row
};

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  LayerNormCache* cache = nullptr, double eps = 1e-5);

struct LayerNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};
LayerNormGrads layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                                   const Tensor& gamma);

// ---------------------------------------------------------------------------
// Shape ops.
// ---------------------------------------------------------------------------

Tensor concat_last(const std::vector<const Tensor*>& parts);
std::vector<Tensor> split_last(const Tensor& x, const std::vector<std::size_t>& widths);

Tensor transpose(const Tensor& x);  // 2D

Tensor slice_rows(const Tensor& x, std::size_t lo, std::size_t hi);

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

double sum(const Tensor& x);
double mean(const Tensor& x);
Tensor sum_backward(double dy, const std::vector<std::size_t>& shape);
Tensor mean_backward(double dy, const std::vector<std::size_t>& shape);

// Mean over the first axis of a 2D tensor (time pooling).
Tensor mean_rows(const Tensor& x);
Tensor mean_rows_backward(const Tensor& dy, std::size_t rows);

// ---------------------------------------------------------------------------
// Cross entropy on raw logits for a single sample.
// ---------------------------------------------------------------------------

double cross_entropy_with_logits(const Tensor& logits, std::size_t label);
Tensor cross_entropy_with_logits_backward(const Tensor& logits, std::size_t label,
                                          double upstream = 1.0);

}  // namespace misstsm
