#pragma once

#include <string>
#include <vector>

#include "misstsm/tensor.hpp"

namespace misstsm {

// Multivariate series as a dense T x N grid plus a missingness mask.
// mask(t,d) == 1 means the entry is missing; its value cell holds the
// sentinel 0.0 and must never influence any downstream computation.
struct TimeSeries {
  Tensor values{std::vector<std::size_t>{0, 0}};
  Tensor mask{std::vector<std::size_t>{0, 0}};
  std::vector<std::string> variate_names;
  std::vector<std::string> timestamps;  // optional; empty when synthetic

  std::size_t steps() const { return values.shape[0]; }
  std::size_t variates() const { return values.shape[1]; }
};

struct WindowPair {
  Tensor context_values;   // L x N
  Tensor context_mask;     // L x N, 1 = missing
  Tensor target;           // S x N
  Tensor target_observed;  // S x N, 1 = usable for loss/metrics
};

struct LabeledSegment {
  TimeSeries series;
  std::size_t label = 0;
};

// Per-variate normalization statistics (population std over observed
// training entries; std clamped to 1 when degenerate).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

TimeSeries load_forecast_csv(const std::string& path);
void save_forecast_csv(const std::string& path, const TimeSeries& ts);

NormStats zscore_fit(const TimeSeries& train);
// Rewrites values in place: observed entries are standardized, masked
// entries are reset to the sentinel.
void zscore_apply(TimeSeries& ts, const NormStats& stats);
void zscore_invert(TimeSeries& ts, const NormStats& stats);
Tensor denormalize(const Tensor& values, const NormStats& stats);

std::vector<WindowPair> make_windows(const TimeSeries& ts, std::size_t L, std::size_t S,
                                     std::size_t stride = 1);

struct SplitResult {
  TimeSeries train, val, test;
};
// Contiguous chronological split; min_len guards each slice (0 disables).
SplitResult split(const TimeSeries& ts, const std::vector<double>& ratios,
                  std::size_t min_len = 0);

std::vector<LabeledSegment> load_classification(const std::string& path);
// Pads (missing-marked) or truncates every segment to exactly target_len steps.
void pad_segments(std::vector<LabeledSegment>& segments, std::size_t target_len);

std::size_t num_classes(const std::vector<LabeledSegment>& segments);

}  // namespace misstsm
