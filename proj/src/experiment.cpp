#include "misstsm/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "misstsm/rng.hpp"

namespace misstsm {

namespace {

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const char* section) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void read_into(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::optional<MaskSpec> mask_from_json(const nlohmann::json& j) {
  std::string scheme = "mcar";
  read_into(j, "scheme", scheme);
  if (scheme == "none") {
    require_keys(j, {"scheme"}, "mask");
    return std::nullopt;
  }
  require_keys(j, {"scheme", "p", "alpha", "freq_range", "phase_range", "seed"}, "mask");
  MaskSpec spec;
  if (scheme == "mcar") {
    spec.scheme = MaskScheme::MCAR;
  } else if (scheme == "periodic") {
    spec.scheme = MaskScheme::Periodic;
  } else {
    throw std::invalid_argument("config: mask.scheme must be mcar, periodic, or none");
  }
  read_into(j, "p", spec.p);
  read_into(j, "alpha", spec.alpha);
  if (j.contains("freq_range")) {
    auto v = j.at("freq_range").get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument("config: mask.freq_range needs 2 values");
    spec.freq_range = {v[0], v[1]};
  }
  if (j.contains("phase_range")) {
    auto v = j.at("phase_range").get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument("config: mask.phase_range needs 2 values");
    spec.phase_range = {v[0], v[1]};
  }
  read_into(j, "seed", spec.seed);
  return spec;
}

void model_from_json(const nlohmann::json& j, ModelConfig& model) {
  require_keys(j,
               {"use_misstsm", "embed_dim", "key_dim", "heads", "out_dim", "mode", "eta",
                "backbone_dim", "n_enc", "n_dec", "backbone_heads", "ff_dim"},
               "model");
  read_into(j, "use_misstsm", model.use_misstsm);
  read_into(j, "embed_dim", model.layer.embed_dim);
  read_into(j, "key_dim", model.layer.key_dim);
  read_into(j, "heads", model.layer.heads);
  read_into(j, "out_dim", model.layer.out_dim);
  if (j.contains("mode")) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode != "wrapper" && mode != "direct") {
      throw std::invalid_argument("config: model.mode must be wrapper or direct");
    }
    model.layer.mode = mode == "wrapper" ? LayerMode::Wrapper : LayerMode::Direct;
  }
  read_into(j, "eta", model.layer.eta);
  read_into(j, "backbone_dim", model.backbone.model_dim);
  read_into(j, "n_enc", model.backbone.n_enc);
  read_into(j, "n_dec", model.backbone.n_dec);
  read_into(j, "backbone_heads", model.backbone.heads);
  read_into(j, "ff_dim", model.backbone.ff_dim);
}

void train_from_json(const nlohmann::json& j, TrainConfig& train) {
  require_keys(j,
               {"pretrain_lr", "finetune_lr", "epochs_pretrain", "epochs_finetune",
                "early_stop_patience", "batch", "mae_time_mask_ratio",
                "freeze_encoder_finetune"},
               "train");
  read_into(j, "pretrain_lr", train.pretrain_lr);
  read_into(j, "finetune_lr", train.finetune_lr);
  read_into(j, "epochs_pretrain", train.epochs_pretrain);
  read_into(j, "epochs_finetune", train.epochs_finetune);
  read_into(j, "early_stop_patience", train.early_stop_patience);
  read_into(j, "batch", train.batch);
  read_into(j, "mae_time_mask_ratio", train.mae_time_mask_ratio);
  read_into(j, "freeze_encoder_finetune", train.freeze_encoder_finetune);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.path.empty()) throw std::invalid_argument("config: dataset.path is required");
  if (dataset.format != "forecast_csv" && dataset.format != "classify_csv") {
    throw std::invalid_argument("config: dataset.format must be forecast_csv or classify_csv");
  }
  if (split.size() != 3) throw std::invalid_argument("config: split needs 3 ratios");
  double total = 0.0;
  for (double r : split) {
    if (r <= 0.0) throw std::invalid_argument("config: split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("config: split must sum to 1");
  if (context_len == 0) throw std::invalid_argument("config: context_len must be positive");
  if (stride == 0) throw std::invalid_argument("config: stride must be positive");
  if (mask) mask->validate();
  model.layer.validate();
  train.validate();
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  require_keys(j,
               {"dataset", "split", "context_len", "horizon", "stride", "mask", "model", "train",
                "output_dir", "seed", "normalize"},
               "config");
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const nlohmann::json& d = j.at("dataset");
    require_keys(d, {"path", "format"}, "dataset");
    read_into(d, "path", cfg.dataset.path);
    read_into(d, "format", cfg.dataset.format);
  }
  read_into(j, "split", cfg.split);
  read_into(j, "context_len", cfg.context_len);
  read_into(j, "horizon", cfg.horizon);
  read_into(j, "stride", cfg.stride);
  if (j.contains("mask")) cfg.mask = mask_from_json(j.at("mask"));
  if (j.contains("model")) model_from_json(j.at("model"), cfg.model);
  if (j.contains("train")) train_from_json(j.at("train"), cfg.train);
  read_into(j, "output_dir", cfg.output_dir);
  read_into(j, "seed", cfg.seed);
  read_into(j, "normalize", cfg.normalize);
  cfg.train.seed = cfg.seed;  // one top-level seed governs the run
  cfg.validate();
  return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["dataset"] = {{"path", cfg.dataset.path}, {"format", cfg.dataset.format}};
  j["split"] = cfg.split;
  j["context_len"] = cfg.context_len;
  j["horizon"] = cfg.horizon;
  j["stride"] = cfg.stride;
  if (cfg.mask) {
    j["mask"] = {
        {"scheme", cfg.mask->scheme == MaskScheme::MCAR ? "mcar" : "periodic"},
        {"p", cfg.mask->p},
        {"alpha", cfg.mask->alpha},
        {"freq_range", std::vector<double>{cfg.mask->freq_range[0], cfg.mask->freq_range[1]}},
        {"phase_range", std::vector<double>{cfg.mask->phase_range[0], cfg.mask->phase_range[1]}},
        {"seed", cfg.mask->seed},
    };
  } else {
    j["mask"] = {{"scheme", "none"}};
  }
  j["model"] = {
      {"use_misstsm", cfg.model.use_misstsm},
      {"embed_dim", cfg.model.layer.embed_dim},
      {"key_dim", cfg.model.layer.key_dim},
      {"heads", cfg.model.layer.heads},
      {"out_dim", cfg.model.layer.out_dim},
      {"mode", cfg.model.layer.mode == LayerMode::Wrapper ? "wrapper" : "direct"},
      {"eta", cfg.model.layer.eta},
      {"backbone_dim", cfg.model.backbone.model_dim},
      {"n_enc", cfg.model.backbone.n_enc},
      {"n_dec", cfg.model.backbone.n_dec},
      {"backbone_heads", cfg.model.backbone.heads},
      {"ff_dim", cfg.model.backbone.ff_dim},
  };
  j["train"] = {
      {"pretrain_lr", cfg.train.pretrain_lr},
      {"finetune_lr", cfg.train.finetune_lr},
      {"epochs_pretrain", cfg.train.epochs_pretrain},
      {"epochs_finetune", cfg.train.epochs_finetune},
      {"early_stop_patience", cfg.train.early_stop_patience},
      {"batch", cfg.train.batch},
      {"mae_time_mask_ratio", cfg.train.mae_time_mask_ratio},
      {"freeze_encoder_finetune", cfg.train.freeze_encoder_finetune},
  };
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["normalize"] = cfg.normalize;
  return j;
}

namespace {

void apply_override(nlohmann::json& root, const std::string& path, const std::string& value) {
  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw std::invalid_argument("override: empty key in '" + path + "'");
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

ExperimentConfig load_experiment_config(
    const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: '" + path + "' is not valid JSON: " + e.what());
  }
  for (const auto& [key, value] : overrides) apply_override(j, key, value);
  return experiment_config_from_json(j);
}

std::string hash_bytes(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;  // FNV-1a 64
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("hash_file: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return hash_bytes(bytes);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  // output_dir is plumbing, not part of the experiment identity.
  nlohmann::json j = experiment_config_to_json(cfg);
  j.erase("output_dir");
  return hash_bytes(j.dump());
}

std::string resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && root[0] != '\0') {
      p = std::filesystem::path(root) / p;
    }
  }
  std::filesystem::create_directories(p);
  return p.string();
}

void RunManifest::write(const std::string& dir) const {
  nlohmann::json j;
  j["command"] = command;
  j["config_fingerprint"] = config_fingerprint;
  j["seed"] = seed;
  j["input_hashes"] = input_hashes;
  j["outputs"] = outputs;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["notes"] = notes;
  const std::string path = (std::filesystem::path(dir) / ("manifest_" + command + ".json")).string();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("manifest: cannot write '" + path + "'");
  os << j.dump(2) << "\n";
}

void write_epoch_log_jsonl(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("log: cannot write '" + path + "'");
  for (const EpochLog& e : log) {
    nlohmann::json train_line{
        {"epoch", e.epoch}, {"split", "train"}, {"loss", e.train_loss}, {"seconds", e.seconds}};
    nlohmann::json val_line{
        {"epoch", e.epoch}, {"split", "val"}, {"loss", e.val_loss}, {"seconds", e.seconds}};
    os << train_line.dump() << "\n" << val_line.dump() << "\n";
  }
}

namespace {

void apply_synthetic_mask(TimeSeries& ts, const MaskSpec& spec) {
  const Tensor synthetic = gen_mask(ts.steps(), ts.variates(), spec);
  ts.mask = merge_masks(ts.mask, synthetic);
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (ts.mask.data[i] != 0.0) ts.values.data[i] = 0.0;
  }
}

}  // namespace

ForecastData prepare_forecast_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.format != "forecast_csv") {
    throw std::invalid_argument("config: forecast pipeline needs dataset.format=forecast_csv");
  }
  if (cfg.horizon == 0) throw std::invalid_argument("config: horizon must be positive");
  TimeSeries ts = load_forecast_csv(cfg.dataset.path);
  if (cfg.mask) apply_synthetic_mask(ts, *cfg.mask);

  ForecastData data;
  data.n_variates = ts.variates();
  data.splits = split(ts, cfg.split, cfg.context_len + cfg.horizon);
  if (cfg.normalize) {
    data.stats = zscore_fit(data.splits.train);
    zscore_apply(data.splits.train, data.stats);
    zscore_apply(data.splits.val, data.stats);
    zscore_apply(data.splits.test, data.stats);
  }
  data.train = make_windows(data.splits.train, cfg.context_len, cfg.horizon, cfg.stride);
  data.val = make_windows(data.splits.val, cfg.context_len, cfg.horizon, cfg.stride);
  data.test = make_windows(data.splits.test, cfg.context_len, cfg.horizon, cfg.stride);
  return data;
}

ClassifyData prepare_classify_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.format != "classify_csv") {
    throw std::invalid_argument("config: classify pipeline needs dataset.format=classify_csv");
  }
  std::vector<LabeledSegment> segments = load_classification(cfg.dataset.path);
  pad_segments(segments, cfg.context_len);
  if (cfg.mask) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      MaskSpec spec = *cfg.mask;
      spec.seed = derive_seed(cfg.mask->seed, 5000 + i);  // independent mask per segment
      apply_synthetic_mask(segments[i].series, spec);
    }
  }

  ClassifyData data;
  data.n_classes = num_classes(segments);
  data.n_variates = segments.empty() ? 0 : segments.front().series.variates();

  // Deterministic shuffled split.
  Rng rng = make_rng(derive_seed(cfg.seed, 31));
  std::vector<std::size_t> order = shuffled_indices(segments.size(), rng);
  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(cfg.split[0] * static_cast<double>(segments.size())));
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(cfg.split[1] * static_cast<double>(segments.size())));
  for (std::size_t i = 0; i < order.size(); ++i) {
    LabeledSegment& seg = segments[order[i]];
    if (i < n_train) {
      data.train.push_back(std::move(seg));
    } else if (i < n_train + n_val) {
      data.val.push_back(std::move(seg));
    } else {
      data.test.push_back(std::move(seg));
    }
  }
  if (data.train.empty() || data.val.empty() || data.test.empty()) {
    throw std::invalid_argument("config: classification split leaves an empty subset");
  }

  if (cfg.normalize) {
    // Fit on the concatenated training segments' observed entries.
    TimeSeries train_cat;
    const std::size_t N = data.n_variates;
    std::size_t total = 0;
    for (const LabeledSegment& s : data.train) total += s.series.steps();
    train_cat.values = Tensor({total, N});
    train_cat.mask = Tensor({total, N});
    std::size_t row = 0;
    for (const LabeledSegment& s : data.train) {
      for (std::size_t t = 0; t < s.series.steps(); ++t, ++row) {
        for (std::size_t d = 0; d < N; ++d) {
          train_cat.values.at(row, d) = s.series.values.at(t, d);
          train_cat.mask.at(row, d) = s.series.mask.at(t, d);
        }
      }
    }
    const NormStats stats = zscore_fit(train_cat);
    for (auto* subset : {&data.train, &data.val, &data.test}) {
      for (LabeledSegment& s : *subset) zscore_apply(s.series, stats);
    }
  }
  return data;
}

Model build_model(const ExperimentConfig& cfg, std::size_t n_variates, std::size_t n_classes,
                  const std::string& task) {
  ModelConfig mc = cfg.model;
  mc.n_variates = n_variates;
  mc.context_len = cfg.context_len;
  mc.horizon = task == "forecast" ? cfg.horizon : 0;
  mc.n_classes = task == "classify" ? n_classes : 0;
  if (task != "forecast" && task != "classify" && task != "pretrain") {
    throw std::invalid_argument("build_model: unknown task '" + task + "'");
  }
  return Model(mc, derive_seed(cfg.seed, 1));
}

std::size_t load_matching_weights(Model& model, const ParamStore& source) {
  std::size_t copied = 0;
  for (const auto& [name, slot] : source.slots()) {
    if (!model.params().contains(name)) continue;
    ParamSlot& target = model.params().get(name);
    if (target.value.shape != slot.value.shape) {
      throw std::invalid_argument("checkpoint: shape mismatch for parameter '" + name + "'");
    }
    target.value = slot.value;
    ++copied;
  }
  if (copied == 0) throw std::invalid_argument("checkpoint: no parameters matched the model");
  return copied;
}

MetricReport evaluate_forecast_model(const Model& model, const std::vector<WindowPair>& test,
                                     const std::string& fingerprint, std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("evaluate: no test windows");
  double se = 0.0, ae = 0.0;
  std::size_t n = 0;
  for (const WindowPair& w : test) {
    const Tensor pred = model.predict_forecast(w.context_values, w.context_mask);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (w.target_observed.data[i] != 0.0) {
        const double d = pred.data[i] - w.target.data[i];
        se += d * d;
        ae += std::abs(d);
        ++n;
      }
    }
  }
  if (n == 0) throw std::invalid_argument("evaluate: no observed target entries");
  MetricReport report;
  report.task = "forecast";
  report.metrics["mse"] = se / static_cast<double>(n);
  report.metrics["mae"] = ae / static_cast<double>(n);
  report.n_samples = test.size();
  report.seed = seed;
  report.config_fingerprint = fingerprint;
  return report;
}

MetricReport evaluate_classify_model(const Model& model, const std::vector<LabeledSegment>& test,
                                     std::size_t n_classes, const std::string& fingerprint,
                                     std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("evaluate: no test segments");
  std::vector<std::size_t> preds, labels;
  std::vector<double> pos_scores;
  std::vector<int> binary_labels;
  std::size_t correct = 0;
  for (const LabeledSegment& seg : test) {
    const Tensor probs = model.predict_classify(seg.series.values, seg.series.mask);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs.data[c] > probs.data[arg]) arg = c;
    }
    preds.push_back(arg);
    labels.push_back(seg.label);
    correct += arg == seg.label;
    if (n_classes == 2) {
      pos_scores.push_back(probs.data[1]);
      binary_labels.push_back(seg.label == 1 ? 1 : 0);
    }
  }
  MetricReport report;
  report.task = "classify";
  report.metrics["macro_f1"] = f1_macro(preds, labels, n_classes);
  report.metrics["accuracy"] =
      static_cast<double>(correct) / static_cast<double>(test.size());
  if (n_classes == 2) {
    std::size_t positives = 0;
    for (int l : binary_labels) positives += l;
    if (positives > 0 && positives < binary_labels.size()) {  // rank metrics need both classes
      report.metrics["auroc"] = auroc(pos_scores, binary_labels);
      report.metrics["auprc"] = auprc(pos_scores, binary_labels);
    }
  }
  report.n_samples = test.size();
  report.seed = seed;
  report.config_fingerprint = fingerprint;
  return report;
}

}  // namespace misstsm
