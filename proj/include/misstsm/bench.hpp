#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "misstsm/dataio.hpp"
#include "misstsm/training.hpp"

namespace misstsm {

struct ScalingRow {
  std::size_t n_variates = 0;
  double mean_seconds = 0.0;
};

// Wall-clock mean over reps of one attention-layer forward pass at each
// variate count, on fixed-seed fully observed inputs. One warmup pass per
// size is excluded from the mean.
std::vector<ScalingRow> scaling_benchmark(const std::vector<std::size_t>& n_list, std::size_t T,
                                          std::size_t embed_dim, std::size_t reps,
                                          std::uint64_t seed = 0);

std::string scaling_table_csv(const std::vector<ScalingRow>& rows);

// Sample Pearson correlation; throws when either side has zero variance or
// fewer than two points.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct PropagationPoint {
  std::string imputer;
  double fraction = 0.0;
  std::uint64_t mask_seed = 0;
  double imputation_rmse = 0.0;
  double downstream_mse = 0.0;
};

struct PropagationResult {
  std::vector<PropagationPoint> points;
  double pearson = 0.0;
  bool degenerate = false;  // zero variance on an axis; correlation not meaningful
};

struct PropagationConfig {
  std::vector<std::string> imputers{"spline", "locf", "knn"};
  std::vector<double> fractions{0.6, 0.7, 0.8, 0.9};
  std::size_t reps_per_cell = 1;  // mask seeds per (imputer, fraction) cell
  std::size_t context_len = 24;
  std::size_t horizon = 8;
  std::size_t stride = 4;
  std::uint64_t seed = 0;
};

// Impute-then-model error coupling: for each (imputer, fraction, rep), mask
// the ground truth, impute, train a dense-input forecaster on the imputed
// values, and pair the imputation RMSE with the test MSE against the truth.
// truth must be fully observed.
PropagationResult error_propagation_study(const TimeSeries& truth, const PropagationConfig& pcfg,
                                          const ModelConfig& model_cfg,
                                          const TrainConfig& train_cfg);

std::string propagation_table_csv(const PropagationResult& result);

}  // namespace misstsm
