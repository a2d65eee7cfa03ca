#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eapo/data.hpp"
#include "eapo/evaluation.hpp"
#include "eapo/model.hpp"
#include "eapo/retrieval.hpp"
#include "eapo/training.hpp"

namespace eapo {

inline constexpr const char* kVersion = "0.1.0";

struct FileSource {
  std::filesystem::path train;
  std::filesystem::path test;
  TableSchema schema;
};

struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::optional<SyntheticConfig> synthetic;
  std::optional<FileSource> files;
  ModelSpec model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  // 0 uses every test input as a retrieval query.
  std::size_t query_subsample = 0;
  double bin_width = 0.5;
  // Interim checkpoint every N epochs during training; 0 disables.
  std::size_t checkpoint_interval = 0;
  std::filesystem::path output_dir = "eapo-out";

  /// Parses the nested JSON document. Missing keys take the defaults above.
  /// Relative file paths resolve against `base_dir`. A run manifest is also
  /// accepted, in which case its embedded config snapshot is used.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  /// Exactly one data source; referenced files exist; stage configs valid.
  void validate() const;
  /// Sets every seed (data, model, pretrain, fine-tune) to `seed`.
  void override_seed(std::uint64_t seed);
};

/// Raw and standardized splits. The standardizer is fit on raw train only.
struct PreparedData {
  Dataset train_raw;
  Dataset test_raw;
  Standardizer standardizer;
  Dataset train;
  Dataset test;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

TrainResult run_pretrain(const ExperimentConfig& cfg, const PreparedData& data);

struct AdaptResult {
  LocalManifold manifold;
  ExtremeSubset extreme;
  TrainResult trained;
};

AdaptResult run_adapt(const ExperimentConfig& cfg, const PreparedData& data,
                      const Classifier& pretrained);

struct ModelEvaluation {
  EvalReport report;  // metrics on test at the train-selected threshold
  std::optional<IntensityBreakdown> breakdown;
  std::vector<std::string> warnings;
};

/// Threshold chosen on the standardized training split, metrics on test.
ModelEvaluation evaluate_model(const ExperimentConfig& cfg, const PreparedData& data,
                               const Classifier& model);

/// Stage directories are keyed by a hash of everything that determines
/// their contents, so a changed config never reads stale outputs.
struct StageKeys {
  std::string data;
  std::string pretrain;
  std::string adapt;
  std::string eval;
};

StageKeys stage_keys(const ExperimentConfig& cfg, const PreparedData& data);

struct StagePaths {
  std::filesystem::path data_dir;
  std::filesystem::path pretrain_dir;
  std::filesystem::path adapt_dir;
  std::filesystem::path eval_dir;
  std::filesystem::path manifest;
};

StagePaths stage_paths(const ExperimentConfig& cfg, const StageKeys& keys);

struct SynthOutputs {
  std::filesystem::path train;
  std::filesystem::path test;
};

struct EvalOutputs {
  ModelEvaluation pretrained;
  std::optional<ModelEvaluation> adapted;
  std::vector<std::filesystem::path> files;
};

SynthOutputs cmd_synth(const ExperimentConfig& cfg);
std::filesystem::path cmd_pretrain(const ExperimentConfig& cfg);
std::filesystem::path cmd_adapt(const ExperimentConfig& cfg);
EvalOutputs cmd_eval(const ExperimentConfig& cfg);

/// Runs every stage in order and writes manifest.json last. Returns the
/// manifest document.
nlohmann::ordered_json cmd_run_all(const ExperimentConfig& cfg);

/// Recomputes the file hashes a manifest records; returns mismatching paths.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path);

}  // namespace eapo
