#include "misstsm/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "misstsm/baselines.hpp"
#include "misstsm/layer.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/metrics.hpp"
#include "misstsm/rng.hpp"

namespace misstsm {

namespace {

double time_forward(const MissTSMLayer& layer, const Tensor& values, const Tensor& mask,
                    std::size_t reps) {
  layer.forward(values, mask);  // warmup, excluded
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < reps; ++r) {
    MissTSMLayer::Forward fw = layer.forward(values, mask);
    if (!all_finite(fw.output)) throw std::runtime_error("scaling_benchmark: non-finite output");
  }
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / static_cast<double>(reps);
}

}  // namespace

std::vector<ScalingRow> scaling_benchmark(const std::vector<std::size_t>& n_list, std::size_t T,
                                          std::size_t embed_dim, std::size_t reps,
                                          std::uint64_t seed) {
  if (n_list.empty() || T == 0 || reps == 0) {
    throw std::invalid_argument("scaling_benchmark: empty size list, T, or reps");
  }
  std::vector<ScalingRow> rows;
  for (std::size_t n : n_list) {
    MissTSMConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.key_dim = embed_dim / 2;
    cfg.heads = 2;
    cfg.mode = LayerMode::Direct;
    ParamStore store;
    MissTSMLayer layer(cfg, n, store, derive_seed(seed, n));

    Rng rng = make_rng(derive_seed(seed, 1000 + n));
    Tensor values({T, n});
    for (double& v : values.data) v = uniform(rng, -1.0, 1.0);
    Tensor mask({T, n});  // fully observed: times the dense worst case

    rows.push_back({n, time_forward(layer, values, mask, reps)});
  }
  return rows;
}

std::string scaling_table_csv(const std::vector<ScalingRow>& rows) {
  std::string out = "n_variates,mean_seconds\n";
  char buf[64];
  for (const ScalingRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9f\n", r.n_variates, r.mean_seconds);
    out += buf;
  }
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("pearson: needs two equal-length series of >= 2 points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("pearson: zero variance on an axis");
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

ImputedSeries run_imputer(const std::string& name, const TimeSeries& ts) {
  if (name == "spline") return spline_impute(ts);
  if (name == "locf") return locf_impute(ts);
  if (name == "knn") return knn_impute(ts);
  throw std::invalid_argument("error_propagation_study: unknown imputer '" + name + "'");
}

}  // namespace

PropagationResult error_propagation_study(const TimeSeries& truth, const PropagationConfig& pcfg,
                                          const ModelConfig& model_cfg,
                                          const TrainConfig& train_cfg) {
  for (double m : truth.mask.data) {
    if (m != 0.0) {
      throw std::invalid_argument("error_propagation_study: ground truth must be fully observed");
    }
  }

  // Shared chronological split; the same window grid serves every cell so
  // downstream MSEs are comparable.
  SplitResult truth_split = split(truth, {0.7, 0.1, 0.2});
  std::vector<WindowPair> truth_test =
      make_windows(truth_split.test, pcfg.context_len, pcfg.horizon, pcfg.stride);

  PropagationResult result;
  std::size_t cell = 0;
  for (const std::string& imputer : pcfg.imputers) {
    for (double fraction : pcfg.fractions) {
      for (std::size_t rep = 0; rep < pcfg.reps_per_cell; ++rep, ++cell) {
        const std::uint64_t mask_seed = derive_seed(pcfg.seed, cell);
        TimeSeries masked = truth;
        masked.mask = gen_mcar(truth.steps(), truth.variates(), fraction, mask_seed);
        for (std::size_t i = 0; i < masked.values.size(); ++i) {
          if (masked.mask.data[i] != 0.0) masked.values.data[i] = 0.0;
        }

        ImputedSeries imputed = run_imputer(imputer, masked);
        PropagationPoint point;
        point.imputer = imputer;
        point.fraction = fraction;
        point.mask_seed = mask_seed;
        point.imputation_rmse =
            imputation_rmse(imputed.values, truth.values, masked.mask);

        // Dense-input forecaster trained on the imputed values alone.
        TimeSeries dense;
        dense.values = imputed.values;
        dense.mask = Tensor(truth.mask.shape);
        dense.variate_names = truth.variate_names;
        SplitResult dense_split = split(dense, {0.7, 0.1, 0.2});
        std::vector<WindowPair> train =
            make_windows(dense_split.train, pcfg.context_len, pcfg.horizon, pcfg.stride);
        std::vector<WindowPair> val =
            make_windows(dense_split.val, pcfg.context_len, pcfg.horizon, pcfg.stride);
        std::vector<WindowPair> test =
            make_windows(dense_split.test, pcfg.context_len, pcfg.horizon, pcfg.stride);
        if (train.empty() || val.empty() || test.empty()) {
          throw std::invalid_argument(
              "error_propagation_study: series too short for the window grid");
        }

        ModelConfig mc = model_cfg;
        mc.use_misstsm = false;  // impute-then-model consumes dense rows
        mc.n_variates = truth.variates();
        mc.context_len = pcfg.context_len;
        mc.horizon = pcfg.horizon;
        mc.n_classes = 0;
        Model model(mc, derive_seed(pcfg.seed, 777 + cell));
        finetune_forecast(model, train, val, train_cfg);

        double acc = 0.0;
        for (std::size_t w = 0; w < test.size(); ++w) {
          Tensor pred = model.predict_forecast(test[w].context_values, test[w].context_mask);
          acc += mse(pred, truth_test[w].target);  // error against the real signal
        }
        point.downstream_mse = acc / static_cast<double>(test.size());
        result.points.push_back(std::move(point));
      }
    }
  }

  std::vector<double> xs, ys;
  for (const PropagationPoint& p : result.points) {
    xs.push_back(p.imputation_rmse);
    ys.push_back(p.downstream_mse);
  }
  try {
    result.pearson = pearson(xs, ys);
  } catch (const std::invalid_argument&) {
    result.degenerate = true;
    result.pearson = 0.0;
  }
  return result;
}

std::string propagation_table_csv(const PropagationResult& result) {
  std::string out = "imputer,fraction,mask_seed,imputation_rmse,downstream_mse\n";
  char buf[160];
  for (const PropagationPoint& p : result.points) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%llu,%.9g,%.9g\n", p.imputer.c_str(), p.fraction,
                  static_cast<unsigned long long>(p.mask_seed), p.imputation_rmse,
                  p.downstream_mse);
    out += buf;
  }
  return out;
}

}  // namespace misstsm
