#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "misstsm/baselines.hpp"
#include "misstsm/bench.hpp"
#include "misstsm/checkpoint.hpp"
#include "misstsm/experiment.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/metrics.hpp"
#include "misstsm/rng.hpp"
#include "misstsm/training.hpp"

namespace fs = std::filesystem;
using namespace misstsm;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw std::invalid_argument(what + ": file '" + path + "' does not exist");
  }
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument("bad");
      out.push_back(static_cast<std::size_t>(v));
    } catch (...) {
      throw std::invalid_argument(std::string(flag) + ": '" + item +
                                  "' is not a positive integer");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument(std::string(flag) + ": empty list");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
}

// Overrides shared by every config-driven command; file < --set < named flags.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string output_dir;
  std::int64_t seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON")->required();
    cmd->add_option("--set", sets, "override a config key, e.g. --set mask.p=0.8");
    cmd->add_option("--output-dir", output_dir, "override output_dir");
    cmd->add_option("--seed", seed, "override seed");
  }

  ExperimentConfig load() const {
    require_file(config_path, "config");
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& kv : sets) {
      const std::size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      }
      overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!output_dir.empty()) overrides.emplace_back("output_dir", output_dir);
    if (seed >= 0) overrides.emplace_back("seed", std::to_string(seed));
    return load_experiment_config(config_path, overrides);
  }
};

// ---- mask ----------------------------------------------------------------

struct MaskArgs {
  std::string in, out;
  std::string scheme = "mcar";
  double p = 0.7, alpha = 0.5;
  double freq_lo = 0.2, freq_hi = 0.8;
  std::uint64_t seed = 0;
};

int cmd_mask(const MaskArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  require_file(a.in, "mask");
  MaskSpec spec;
  if (a.scheme == "mcar") {
    spec.scheme = MaskScheme::MCAR;
  } else if (a.scheme == "periodic") {
    spec.scheme = MaskScheme::Periodic;
  } else {
    throw std::invalid_argument("mask: --scheme must be mcar or periodic");
  }
  spec.p = a.p;
  spec.alpha = a.alpha;
  spec.freq_range = {a.freq_lo, a.freq_hi};
  spec.seed = a.seed;
  spec.validate();

  const TimeSeries ts = load_forecast_csv(a.in);
  const Tensor mask = gen_mask(ts.steps(), ts.variates(), spec);
  save_mask(a.out, mask);

  nlohmann::json args{{"command", "mask"}, {"scheme", a.scheme},   {"p", a.p},
                      {"alpha", a.alpha},  {"freq_lo", a.freq_lo}, {"freq_hi", a.freq_hi},
                      {"seed", a.seed}};
  RunManifest manifest;
  manifest.command = "mask";
  manifest.config_fingerprint = hash_bytes(args.dump());
  manifest.seed = a.seed;
  manifest.input_hashes[a.in] = hash_file(a.in);
  manifest.outputs = {fs::path(a.out).filename().string()};
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(fs::path(a.out).parent_path().string().empty()
                     ? "."
                     : fs::path(a.out).parent_path().string());

  std::printf("mask: wrote %s (missing fraction %.4f)\n", a.out.c_str(),
              missing_fraction(mask));
  return 0;
}

// ---- impute ---------------------------------------------------------------

struct ImputeArgs {
  std::string in, out, mask_path;
  std::string method = "spline";
  int order = 2;
  std::size_t k = 10;
};

int cmd_impute(const ImputeArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  require_file(a.in, "impute");
  TimeSeries ts = load_forecast_csv(a.in);
  if (!a.mask_path.empty()) {
    require_file(a.mask_path, "impute");
    const Tensor synthetic = load_mask(a.mask_path);
    ts.mask = merge_masks(ts.mask, synthetic);
    for (std::size_t i = 0; i < ts.values.size(); ++i) {
      if (ts.mask.data[i] != 0.0) ts.values.data[i] = 0.0;
    }
  }

  ImputedSeries imputed;
  if (a.method == "spline") {
    imputed = spline_impute(ts, a.order);
  } else if (a.method == "locf") {
    imputed = locf_impute(ts);
  } else if (a.method == "knn") {
    imputed = knn_impute(ts, a.k);
  } else {
    throw std::invalid_argument("impute: --method must be spline, locf, or knn");
  }

  TimeSeries dense;
  dense.values = imputed.values;
  dense.mask = Tensor(ts.mask.shape);
  dense.variate_names = ts.variate_names;
  dense.timestamps = ts.timestamps;
  save_forecast_csv(a.out, dense);

  nlohmann::json args{{"command", "impute"},
                      {"method", a.method},
                      {"order", a.order},
                      {"k", a.k},
                      {"mask", a.mask_path}};
  RunManifest manifest;
  manifest.command = "impute";
  manifest.config_fingerprint = hash_bytes(args.dump());
  manifest.input_hashes[a.in] = hash_file(a.in);
  if (!a.mask_path.empty()) manifest.input_hashes[a.mask_path] = hash_file(a.mask_path);
  manifest.outputs = {fs::path(a.out).filename().string()};
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(fs::path(a.out).parent_path().string().empty()
                     ? "."
                     : fs::path(a.out).parent_path().string());

  std::printf("impute: wrote %s via %s\n", a.out.c_str(), imputed.provenance.c_str());
  return 0;
}

// ---- pretrain ---------------------------------------------------------------

std::vector<WindowPair> segments_as_windows(const std::vector<LabeledSegment>& segments) {
  std::vector<WindowPair> windows;
  for (const LabeledSegment& s : segments) {
    WindowPair w;
    w.context_values = s.series.values;
    w.context_mask = s.series.mask;
    w.target = Tensor({0, s.series.variates()});
    w.target_observed = Tensor({0, s.series.variates()});
    windows.push_back(std::move(w));
  }
  return windows;
}

int cmd_pretrain(const ConfigArgs& ca, const std::string& ckpt_name) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = ca.load();
  require_file(cfg.dataset.path, "config");
  const std::string outdir = resolve_output_dir(cfg.output_dir);

  std::vector<WindowPair> train, val;
  std::size_t n_variates = 0;
  if (cfg.dataset.format == "forecast_csv") {
    ForecastData data = prepare_forecast_data(cfg);
    train = std::move(data.train);
    val = std::move(data.val);
    n_variates = data.n_variates;
  } else {
    ClassifyData data = prepare_classify_data(cfg);
    train = segments_as_windows(data.train);
    val = segments_as_windows(data.val);
    n_variates = data.n_variates;
  }

  Model model = build_model(cfg, n_variates, 0, "pretrain");
  const PretrainResult result = pretrain_mae(model, train, val, cfg.train);
  if (result.aborted_on_nan) {
    throw std::runtime_error("pretrain: loss went non-finite; last good parameters kept");
  }

  const std::string ckpt_path = (fs::path(outdir) / ckpt_name).string();
  save_checkpoint(ckpt_path, model.config(), model.params());
  const std::string log_path = (fs::path(outdir) / "pretrain_log.jsonl").string();
  write_epoch_log_jsonl(log_path, result.log);

  RunManifest manifest;
  manifest.command = "pretrain";
  manifest.config_fingerprint = config_fingerprint(cfg);
  manifest.seed = cfg.seed;
  manifest.input_hashes[ca.config_path] = hash_file(ca.config_path);
  manifest.input_hashes[cfg.dataset.path] = hash_file(cfg.dataset.path);
  manifest.outputs = {ckpt_name, "pretrain_log.jsonl"};
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(outdir);

  std::printf("pretrain: %zu epochs, train loss %.6f -> %.6f, wrote %s\n", result.log.size(),
              result.log.front().train_loss, result.log.back().train_loss, ckpt_path.c_str());
  return 0;
}

// ---- finetune ---------------------------------------------------------------

int cmd_finetune(const ConfigArgs& ca, const std::string& task, const std::string& from,
                 std::string ckpt_name) {
  const auto start = std::chrono::steady_clock::now();
  if (task != "forecast" && task != "classify") {
    throw std::invalid_argument("finetune: --task must be forecast or classify");
  }
  const ExperimentConfig cfg = ca.load();
  require_file(cfg.dataset.path, "config");
  const std::string outdir = resolve_output_dir(cfg.output_dir);
  if (ckpt_name.empty()) ckpt_name = "finetune_" + task + ".ckpt";

  FinetuneResult result;
  Model model = [&] {
    if (task == "forecast") {
      ForecastData data = prepare_forecast_data(cfg);
      Model m = build_model(cfg, data.n_variates, 0, task);
      if (!from.empty()) {
        require_file(from, "finetune");
        load_matching_weights(m, load_checkpoint(from).params);
      }
      result = finetune_forecast(m, data.train, data.val, cfg.train);
      return m;
    }
    ClassifyData data = prepare_classify_data(cfg);
    Model m = build_model(cfg, data.n_variates, data.n_classes, task);
    if (!from.empty()) {
      require_file(from, "finetune");
      load_matching_weights(m, load_checkpoint(from).params);
    }
    result = finetune_classify(m, data.train, data.val, cfg.train);
    return m;
  }();

  const std::string ckpt_path = (fs::path(outdir) / ckpt_name).string();
  save_checkpoint(ckpt_path, model.config(), model.params());
  const std::string log_path = (fs::path(outdir) / ("finetune_" + task + "_log.jsonl")).string();
  write_epoch_log_jsonl(log_path, result.log);

  RunManifest manifest;
  manifest.command = "finetune";
  manifest.config_fingerprint = config_fingerprint(cfg);
  manifest.seed = cfg.seed;
  manifest.input_hashes[ca.config_path] = hash_file(ca.config_path);
  manifest.input_hashes[cfg.dataset.path] = hash_file(cfg.dataset.path);
  if (!from.empty()) manifest.input_hashes[from] = hash_file(from);
  manifest.outputs = {ckpt_name, "finetune_" + task + "_log.jsonl"};
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(outdir);

  std::printf("finetune(%s): best val %.6f at epoch %zu, wrote %s\n", task.c_str(),
              result.best_val, result.best_epoch, ckpt_path.c_str());
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

int cmd_evaluate(const ConfigArgs& ca, const std::string& task, const std::string& ckpt_path,
                 std::string report_name) {
  const auto start = std::chrono::steady_clock::now();
  if (task != "forecast" && task != "classify") {
    throw std::invalid_argument("evaluate: --task must be forecast or classify");
  }
  const ExperimentConfig cfg = ca.load();
  require_file(cfg.dataset.path, "config");
  require_file(ckpt_path, "evaluate");
  const std::string outdir = resolve_output_dir(cfg.output_dir);
  if (report_name.empty()) report_name = "report_" + task + ".json";

  Model model = load_model(ckpt_path);
  const std::string fingerprint = config_fingerprint(cfg);

  MetricReport report;
  if (task == "forecast") {
    ForecastData data = prepare_forecast_data(cfg);
    if (model.config().n_variates != data.n_variates) {
      throw std::invalid_argument("evaluate: checkpoint expects " +
                                  std::to_string(model.config().n_variates) +
                                  " variates, data has " + std::to_string(data.n_variates));
    }
    if (model.config().horizon != cfg.horizon || model.config().context_len != cfg.context_len) {
      throw std::invalid_argument("evaluate: checkpoint window sizes do not match the config");
    }
    report = evaluate_forecast_model(model, data.test, fingerprint, cfg.seed);
  } else {
    ClassifyData data = prepare_classify_data(cfg);
    if (model.config().n_classes != data.n_classes) {
      throw std::invalid_argument("evaluate: checkpoint has " +
                                  std::to_string(model.config().n_classes) +
                                  " classes, data has " + std::to_string(data.n_classes));
    }
    report = evaluate_classify_model(model, data.test, data.n_classes, fingerprint, cfg.seed);
  }

  const std::string report_path = (fs::path(outdir) / report_name).string();
  write_text(report_path, report.to_json());

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config_fingerprint = fingerprint;
  manifest.seed = cfg.seed;
  manifest.input_hashes[ca.config_path] = hash_file(ca.config_path);
  manifest.input_hashes[cfg.dataset.path] = hash_file(cfg.dataset.path);
  manifest.input_hashes[ckpt_path] = hash_file(ckpt_path);
  manifest.outputs = {report_name};
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(outdir);

  std::string summary;
  for (const auto& [name, value] : report.metrics) {
    summary += " " + name + "=" + std::to_string(value);
  }
  std::printf("evaluate(%s):%s\n", task.c_str(), summary.c_str());
  std::printf("evaluate: wrote %s\n", report_path.c_str());
  return 0;
}

// ---- benchmark ----------------------------------------------------------------

int cmd_benchmark(const std::string& n_list_text, std::size_t T, std::size_t dim,
                  std::size_t reps, std::uint64_t seed, const std::string& out) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::size_t> n_list = parse_size_list(n_list_text, "--n-list");
  const std::vector<ScalingRow> rows = scaling_benchmark(n_list, T, dim, reps, seed);
  write_text(out, scaling_table_csv(rows));

  nlohmann::json args{{"command", "benchmark"}, {"n_list", n_list}, {"T", T},
                      {"dim", dim},            {"reps", reps},     {"seed", seed}};
  RunManifest manifest;
  manifest.command = "benchmark";
  manifest.config_fingerprint = hash_bytes(args.dump());
  manifest.seed = seed;
  manifest.outputs = {fs::path(out).filename().string()};
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(fs::path(out).parent_path().string().empty()
                     ? "."
                     : fs::path(out).parent_path().string());

  for (const ScalingRow& r : rows) {
    std::printf("benchmark: N=%zu mean %.6f s\n", r.n_variates, r.mean_seconds);
  }
  if (rows.size() >= 2 && rows.front().mean_seconds > 0.0) {
    std::printf("benchmark: time(N=%zu)/time(N=%zu) = %.3f\n", rows.back().n_variates,
                rows.front().n_variates, rows.back().mean_seconds / rows.front().mean_seconds);
  }
  std::printf("benchmark: wrote %s\n", out.c_str());
  return 0;
}

// ---- ablate ----------------------------------------------------------------

MetricReport run_forecast_variant(const ExperimentConfig& cfg, bool no_tfi) {
  ForecastData data = prepare_forecast_data(cfg);
  Model pre_model = build_model(cfg, data.n_variates, 0, "pretrain");
  if (no_tfi && pre_model.mutable_layer() != nullptr) {
    pre_model.mutable_layer()->freeze_tfi_identity();
  }
  const PretrainResult pre = pretrain_mae(pre_model, data.train, data.val, cfg.train);
  if (pre.aborted_on_nan) throw std::runtime_error("ablate: pretraining went non-finite");

  Model model = build_model(cfg, data.n_variates, 0, "forecast");
  load_matching_weights(model, pre_model.params());
  if (no_tfi && model.mutable_layer() != nullptr) {
    model.mutable_layer()->freeze_tfi_identity();
  }
  finetune_forecast(model, data.train, data.val, cfg.train);
  return evaluate_forecast_model(model, data.test, config_fingerprint(cfg), cfg.seed);
}

int cmd_ablate(const ConfigArgs& ca, const std::string& dims_text) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig base = ca.load();
  require_file(base.dataset.path, "config");
  if (base.dataset.format != "forecast_csv") {
    throw std::invalid_argument("ablate: forecasting datasets only");
  }
  const std::string outdir = resolve_output_dir(base.output_dir);

  std::vector<std::pair<std::string, MetricReport>> results;
  results.emplace_back("full", run_forecast_variant(base, false));
  results.emplace_back("no_tfi", run_forecast_variant(base, true));
  for (std::size_t dim : parse_size_list(dims_text, "--dims")) {
    ExperimentConfig variant = base;
    variant.model.layer.embed_dim = dim;
    variant.validate();
    results.emplace_back("dim" + std::to_string(dim), run_forecast_variant(variant, false));
  }

  nlohmann::json summary;
  std::vector<std::string> outputs;
  for (const auto& [name, report] : results) {
    const std::string file = "ablate_" + name + ".json";
    write_text((fs::path(outdir) / file).string(), report.to_json());
    outputs.push_back(file);
    summary[name] = nlohmann::json::parse(report.to_json());
    std::printf("ablate(%s): mse=%.6f\n", name.c_str(), report.metrics.at("mse"));
  }
  write_text((fs::path(outdir) / "ablate_summary.json").string(), summary.dump(2) + "\n");
  outputs.push_back("ablate_summary.json");

  RunManifest manifest;
  manifest.command = "ablate";
  manifest.config_fingerprint = config_fingerprint(base);
  manifest.seed = base.seed;
  manifest.input_hashes[ca.config_path] = hash_file(ca.config_path);
  manifest.input_hashes[base.dataset.path] = hash_file(base.dataset.path);
  manifest.outputs = std::move(outputs);
  manifest.wall_clock_seconds = seconds_since(start);
  manifest.write(outdir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based modeling of multivariate time series with missing values"};
  app.require_subcommand(1);
  std::function<int()> run;

  MaskArgs mask_args;
  CLI::App* mask_cmd = app.add_subcommand("mask", "generate a synthetic missingness mask");
  mask_cmd->add_option("--in", mask_args.in, "input CSV (for shape)")->required();
  mask_cmd->add_option("--out", mask_args.out, "output mask CSV")->required();
  mask_cmd->add_option("--scheme", mask_args.scheme, "mcar or periodic");
  mask_cmd->add_option("--p", mask_args.p, "target missing fraction");
  mask_cmd->add_option("--alpha", mask_args.alpha, "periodic modulation strength");
  mask_cmd->add_option("--freq-lo", mask_args.freq_lo, "periodic frequency range low");
  mask_cmd->add_option("--freq-hi", mask_args.freq_hi, "periodic frequency range high");
  mask_cmd->add_option("--seed", mask_args.seed, "mask seed");
  mask_cmd->callback([&] { run = [&] { return cmd_mask(mask_args); }; });

  ImputeArgs impute_args;
  CLI::App* impute_cmd = app.add_subcommand("impute", "fill missing entries classically");
  impute_cmd->add_option("--in", impute_args.in, "input CSV")->required();
  impute_cmd->add_option("--out", impute_args.out, "output CSV (dense)")->required();
  impute_cmd->add_option("--method", impute_args.method, "spline, locf, or knn");
  impute_cmd->add_option("--order", impute_args.order, "spline order (1, 2, or 3)");
  impute_cmd->add_option("--k", impute_args.k, "kNN neighbor count");
  impute_cmd->add_option("--mask", impute_args.mask_path, "extra mask CSV to apply first");
  impute_cmd->callback([&] { run = [&] { return cmd_impute(impute_args); }; });

  ConfigArgs pre_cfg;
  std::string pre_ckpt = "pretrain.ckpt";
  CLI::App* pre_cmd = app.add_subcommand("pretrain", "masked-autoencoder pretraining");
  pre_cfg.attach(pre_cmd);
  pre_cmd->add_option("--out-checkpoint", pre_ckpt, "checkpoint filename");
  pre_cmd->callback([&] { run = [&] { return cmd_pretrain(pre_cfg, pre_ckpt); }; });

  ConfigArgs fin_cfg;
  std::string fin_task = "forecast", fin_from, fin_ckpt;
  CLI::App* fin_cmd = app.add_subcommand("finetune", "fine-tune a task head");
  fin_cfg.attach(fin_cmd);
  fin_cmd->add_option("--task", fin_task, "forecast or classify");
  fin_cmd->add_option("--from", fin_from, "warm-start checkpoint");
  fin_cmd->add_option("--out-checkpoint", fin_ckpt, "checkpoint filename");
  fin_cmd->callback([&] { run = [&] { return cmd_finetune(fin_cfg, fin_task, fin_from, fin_ckpt); }; });

  ConfigArgs eval_cfg;
  std::string eval_task = "forecast", eval_ckpt, eval_report;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  eval_cfg.attach(eval_cmd);
  eval_cmd->add_option("--task", eval_task, "forecast or classify");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to score")->required();
  eval_cmd->add_option("--report", eval_report, "report filename");
  eval_cmd->callback(
      [&] { run = [&] { return cmd_evaluate(eval_cfg, eval_task, eval_ckpt, eval_report); }; });

  std::string bench_n = "100,200";
  std::size_t bench_t = 336, bench_dim = 16, bench_reps = 10;
  std::uint64_t bench_seed = 0;
  std::string bench_out = "scaling.csv";
  CLI::App* bench_cmd = app.add_subcommand("benchmark", "attention forward-pass scaling");
  bench_cmd->add_option("--n-list", bench_n, "comma-separated variate counts");
  bench_cmd->add_option("--t", bench_t, "time steps");
  bench_cmd->add_option("--dim", bench_dim, "embedding width");
  bench_cmd->add_option("--reps", bench_reps, "repetitions per size");
  bench_cmd->add_option("--seed", bench_seed, "input seed");
  bench_cmd->add_option("--out", bench_out, "output CSV");
  bench_cmd->callback([&] {
    run = [&] { return cmd_benchmark(bench_n, bench_t, bench_dim, bench_reps, bench_seed, bench_out); };
  });

  ConfigArgs abl_cfg;
  std::string abl_dims = "4,8,16";
  CLI::App* abl_cmd = app.add_subcommand("ablate", "full / no-TFI / embedding-size variants");
  abl_cfg.attach(abl_cmd);
  abl_cmd->add_option("--dims", abl_dims, "embedding sizes to sweep");
  abl_cmd->callback([&] { run = [&] { return cmd_ablate(abl_cfg, abl_dims); }; });

  try {
    app.parse(argc, argv);
    return run();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad flags are config errors
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
