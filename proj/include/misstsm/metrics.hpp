#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "misstsm/tensor.hpp"

namespace misstsm {

double mse(const Tensor& pred, const Tensor& target);
double mae(const Tensor& pred, const Tensor& target);

// MSE restricted to entries with observed == 1; equals mse() when every
// entry is observed.
double masked_mse(const Tensor& pred, const Tensor& target, const Tensor& observed);

// Macro-averaged F1 over classes 0..n_classes-1. Classes that appear in
// neither labels nor predictions are excluded from the average, so perfect
// predictions score 1 regardless of unused class ids.
double f1_macro(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                std::size_t n_classes);

// Area under the ROC curve via the Mann-Whitney rank statistic; tied scores
// take their midrank, so constant scores give exactly 0.5. Needs at least
// one positive and one negative label.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall curve by the conservative step integral
// sum (R_i - R_{i-1}) * P_i over descending score thresholds, without
// interpolation. Needs at least one positive label.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

// One evaluation artifact: the task, its metric values, and the provenance
// needed to reproduce them.
struct MetricReport {
  std::string task;  // "forecast" or "classify"
  std::map<std::string, double> metrics;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;

  // Serializes deterministically; throws if any metric is non-finite.
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

}  // namespace misstsm
