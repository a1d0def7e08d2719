#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "misstsm/dataio.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/metrics.hpp"
#include "misstsm/training.hpp"

namespace misstsm {

// Relative output directories are resolved under this root when it is set.
inline constexpr char kOutputRootEnv[] = "MISSTSM_OUTPUT_ROOT";

struct DatasetSpec {
  std::string path;
  std::string format = "forecast_csv";  // or "classify_csv"
};

/**
 * One experiment, fully determined: dataset, windowing, synthetic
 * missingness, model sizes, and training protocol. Everything an artifact
 * needs to be reproduced is part of the fingerprint.
 */
struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<double> split{0.7, 0.1, 0.2};
  std::size_t context_len = 336;
  std::size_t horizon = 96;
  std::size_t stride = 1;
  std::optional<MaskSpec> mask = MaskSpec{};  // nullopt: native missing passthrough
  ModelConfig model;                          // data-derived fields filled at load time
  TrainConfig train;
  std::string output_dir = "runs";
  std::uint64_t seed = 0;
  bool normalize = true;

  void validate() const;
};

// Strict parser: every unknown key is an error naming the section. Defaults
// apply for absent keys.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

// Loads the JSON file and applies dotted-path overrides (e.g. "mask.p=0.8",
// "train.epochs_pretrain=10") on top; override values win over file values.
ExperimentConfig load_experiment_config(
    const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides);

// 16-hex-digit FNV-1a of the canonical serialized config; stable across
// re-serialization because keys serialize in sorted order.
std::string config_fingerprint(const ExperimentConfig& cfg);
std::string hash_bytes(const std::string& bytes);
std::string hash_file(const std::string& path);

// Applies kOutputRootEnv to relative paths and creates the directory.
std::string resolve_output_dir(const std::string& dir);

// Run provenance written beside every command's outputs. wall_clock_seconds
// varies between runs; all other fields (and the artifacts themselves) are
// reproducible from config + seed + input hashes.
struct RunManifest {
  std::string command;
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;  // path -> hash
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> notes;

  void write(const std::string& dir) const;  // <dir>/manifest_<command>.json
};

void write_epoch_log_jsonl(const std::string& path, const std::vector<EpochLog>& log);

// ---- pipeline stages shared by the CLI and the acceptance harness ----

struct ForecastData {
  SplitResult splits;  // normalized, with synthetic missingness merged in
  NormStats stats;
  std::vector<WindowPair> train, val, test;
  std::size_t n_variates = 0;
};

ForecastData prepare_forecast_data(const ExperimentConfig& cfg);

struct ClassifyData {
  std::vector<LabeledSegment> train, val, test;  // normalized, masked, padded
  std::size_t n_classes = 0;
  std::size_t n_variates = 0;
};

ClassifyData prepare_classify_data(const ExperimentConfig& cfg);

// Fills the data-derived model fields and builds the model. task: "forecast"
// registers the horizon head, "classify" the class head, "pretrain" neither.
Model build_model(const ExperimentConfig& cfg, std::size_t n_variates, std::size_t n_classes,
                  const std::string& task);

// Copies every source tensor whose name and shape match a target slot
// (checkpoint warm start); returns the number copied. Shape conflicts throw.
std::size_t load_matching_weights(Model& model, const ParamStore& source);

MetricReport evaluate_forecast_model(const Model& model, const std::vector<WindowPair>& test,
                                     const std::string& fingerprint, std::uint64_t seed);
MetricReport evaluate_classify_model(const Model& model, const std::vector<LabeledSegment>& test,
                                     std::size_t n_classes, const std::string& fingerprint,
                                     std::uint64_t seed);

}  // namespace misstsm
