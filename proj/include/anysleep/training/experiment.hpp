#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "anysleep/evaluation/metrics.hpp"
#include "anysleep/model/config.hpp"
#include "anysleep/sampling/sampler.hpp"
#include "anysleep/training/trainer.hpp"

namespace anysleep::train {

nlohmann::json sampling_to_json(const sampling::SamplingConfig& c);
sampling::SamplingConfig sampling_from_json(const nlohmann::json& j);

// Everything a training run depends on. JSON layout:
//   {"corpus": "<manifest or directory>", "out": "<dir>",
//    "model": "desk" | {ModelConfig}, "train": {TrainConfig},
//    "sampling": {...}, "evaluation": {"scope", "recording_policy", "dataset_policy"}}
// Relative paths are resolved against the directory of the config file.
struct ExperimentConfig {
  std::filesystem::path corpus;
  std::filesystem::path out;
  model::ModelConfig model = model::ModelConfig::desk();
  TrainConfig train;
  sampling::SamplingConfig sampling;
  eval::ReportOptions evaluation;

  // ConfigError for unknown keys, wrong types or invalid values.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
  // Hex digest of everything except the output directory.
  std::string hash() const;
};

}  // namespace anysleep::train
