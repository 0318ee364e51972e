#include "anysleep/training/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "anysleep/core/errors.hpp"

namespace anysleep::train {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

nlohmann::json sampling_to_json(const sampling::SamplingConfig& c) {
  return {{"alpha", c.alpha},
          {"sequence_epochs", c.sequence_epochs},
          {"max_channels", c.max_channels},
          {"max_retries", c.max_retries}};
}

sampling::SamplingConfig sampling_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"alpha", "sequence_epochs", "max_channels", "max_retries"}, "sampling");
  sampling::SamplingConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.sequence_epochs = j.value("sequence_epochs", c.sequence_epochs);
    c.max_channels = j.value("max_channels", c.max_channels);
    c.max_retries = j.value("max_retries", c.max_retries);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sampling: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown(j, {"corpus", "out", "model", "train", "sampling", "evaluation"}, "experiment");
  ExperimentConfig c;
  try {
    if (j.contains("corpus")) c.corpus = resolve(j.at("corpus").get<std::string>(), base_dir);
    if (j.contains("out")) c.out = resolve(j.at("out").get<std::string>(), base_dir);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.is_string()) {
        if (m.get<std::string>() != "desk") throw ConfigError("experiment: model must be \"desk\" or an object");
        c.model = model::ModelConfig::desk();
      } else {
        c.model = model::ModelConfig::from_json(m);
      }
    }
    if (j.contains("train")) {
      reject_unknown(j.at("train"),
                     {"batch_size", "updates_per_epoch", "max_epochs", "patience", "lr", "seed", "min_improvement",
                      "validation_policy"},
                     "train");
      c.train = TrainConfig::from_json(j.at("train"));
    }
    if (j.contains("sampling")) c.sampling = sampling_from_json(j.at("sampling"));
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      reject_unknown(e, {"scope", "recording_policy", "dataset_policy"}, "evaluation");
      if (e.contains("scope")) c.evaluation.scope = eval::scope_from_name(e.at("scope").get<std::string>());
      if (e.contains("recording_policy")) {
        c.evaluation.recording_policy = eval::policy_from_name(e.at("recording_policy").get<std::string>());
      }
      if (e.contains("dataset_policy")) {
        c.evaluation.dataset_policy = eval::policy_from_name(e.at("dataset_policy").get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"corpus", corpus.string()},
          {"out", out.string()},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"sampling", sampling_to_json(sampling)},
          {"evaluation",
           {{"scope", eval::scope_name(evaluation.scope)},
            {"recording_policy", eval::policy_name(evaluation.recording_policy)},
            {"dataset_policy", eval::policy_name(evaluation.dataset_policy)}}}};
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  sampling.validate();
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("out");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace anysleep::train
