#pragma once

#include <cstddef>
#include <string>

#include "misstsm/dataio.hpp"
#include "misstsm/tensor.hpp"

namespace misstsm {

/**
 * Result of a classical imputer: a fully dense value grid plus the mask it
 * was asked to fill. Observed entries pass through bit-identically; only
 * entries with original_mask == 1 are synthesized.
 */
struct ImputedSeries {
  Tensor values;         // T x N, no missing entries remain
  Tensor original_mask;  // T x N, 1 = was missing in the input
  std::string provenance;
};

// Per-variate spline interpolation over integer time indices.
//   order 1: piecewise linear
//   order 2: quadratic spline (slope continuity; exact on quadratics)
//   order 3: natural cubic spline
// Variates with too few observed points degrade gracefully (3+ needed for a
// spline, 2 for linear, 1 for a constant fill). Outside the first/last
// observed point the fill is constant (nearest observed value).
// Throws when a variate has no observed points at all.
ImputedSeries spline_impute(const TimeSeries& ts, int order = 2);

// Last observation carried forward, with leading gaps back-filled from the
// first observed value. Idempotent. Throws on a fully missing variate.
ImputedSeries locf_impute(const TimeSeries& ts);

// Each missing entry (t, d) is the mean of d over the k nearest time steps
// that observe d. Distance between two rows is Euclidean over the dimensions
// observed in both, scaled by sqrt(N / |co-observed|); rows sharing no
// observed dimension are not comparable. Ties break toward the lower time
// index. Entries with no comparable donor fall back to the per-variate mean.
// Throws on a fully missing variate.
ImputedSeries knn_impute(const TimeSeries& ts, std::size_t k = 10);

// Root mean squared error over the synthetically masked entries only
// (mask == 1), where ground_truth holds the pre-masking values.
// Throws when the mask selects nothing.
double imputation_rmse(const Tensor& imputed, const Tensor& ground_truth,
                       const Tensor& synthetic_mask);

}  // namespace misstsm
