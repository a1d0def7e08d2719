#include "misstsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "misstsm/kernels.hpp"

namespace misstsm {

double mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  if (pred.size() == 0) throw std::invalid_argument("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double mae(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mae");
  if (pred.size() == 0) throw std::invalid_argument("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred.data[i] - target.data[i]);
  }
  return acc / static_cast<double>(pred.size());
}

double masked_mse(const Tensor& pred, const Tensor& target, const Tensor& observed) {
  return mse_masked(pred, target, observed);
}

double f1_macro(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                std::size_t n_classes) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw std::invalid_argument("f1_macro: preds and labels must be equal-length and nonempty");
  }
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n_classes || labels[i] >= n_classes) {
      throw std::invalid_argument("f1_macro: class id out of range");
    }
    if (preds[i] == labels[i]) {
      ++tp[labels[i]];
    } else {
      ++fp[preds[i]];
      ++fn[labels[i]];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t support = tp[c] + fp[c] + fn[c];
    if (support == 0) continue;  // class absent on both sides
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    total += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / denom;
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("f1_macro: no class has any sample");
  return total / static_cast<double>(counted);
}

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* op) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument(std::string(op) +
                                ": scores and labels must be equal-length and nonempty");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument(std::string(op) + ": labels must be 0/1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument(std::string(op) + ": non-finite score");
  }
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels, "auroc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks: every member of a tie group gets the group's average rank.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (labels[t] == 1) {
      pos_rank_sum += rank[t];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auroc: needs both classes present");
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels, "auprc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t total_pos = 0;
  for (int l : labels) total_pos += l == 1;
  if (total_pos == 0) throw std::invalid_argument("auprc: needs a positive label");

  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, taken = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;  // one threshold per tie group of equal scores
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) {
      tp += labels[order[t]] == 1;
      ++taken;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(taken);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

std::string MetricReport::to_json() const {
  for (const auto& [name, value] : metrics) {
    if (!std::isfinite(value)) {
      throw std::invalid_argument("MetricReport: metric '" + name + "' is not finite");
    }
  }
  nlohmann::json j;
  j["task"] = task;
  j["metrics"] = metrics;
  j["n_samples"] = n_samples;
  j["seed"] = seed;
  j["config_fingerprint"] = config_fingerprint;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MetricReport r;
  r.task = j.at("task").get<std::string>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  return r;
}

}  // namespace misstsm
