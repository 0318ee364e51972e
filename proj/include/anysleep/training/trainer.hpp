#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anysleep/evaluation/metrics.hpp"
#include "anysleep/model/network.hpp"
#include "anysleep/numkernel/optim.hpp"
#include "anysleep/sampling/sampler.hpp"
#include "anysleep/signal_io/corpus.hpp"

namespace anysleep::train {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t updates_per_epoch = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  double lr = 1e-5;
  std::uint64_t seed = 0;
  // A validation score counts as an improvement when it beats the best so
  // far by at least this much.
  double min_improvement = 1e-6;
  eval::AbsentPolicy validation_policy = eval::AbsentPolicy::Zero;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Recordings grouped by dataset in first-seen order, as the sampler sees them.
class TrainingCorpus {
 public:
  explicit TrainingCorpus(std::span<const io::LoadedRecording> recordings);

  std::vector<sampling::DatasetIndex> index() const;
  const io::PreparedRecording& recording(std::size_t dataset, std::size_t index) const;
  std::size_t datasets() const { return groups_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<const io::PreparedRecording*>> groups_;
};

struct Batch {
  std::vector<nk::Array> inputs;                              // [n, L * 3840] per sample
  std::vector<std::vector<std::optional<std::size_t>>> targets;  // per epoch; empty = masked
};

// Loss targets: scored stages map to their index, Excluded is masked.
std::vector<std::optional<std::size_t>> loss_targets(std::span<const Stage> labels);

Batch assemble_batch(const TrainingCorpus& corpus, std::span<const sampling::BatchSample> samples);

// Mean over samples of the masked cross-entropy of each sample.
nk::Var batch_loss(model::Model& model, const nk::Binding& params, const Batch& batch,
                   const model::PassOptions& options);

// One optimizer update on `batch` (train-mode normalization, running
// statistics updated). Returns the loss before the update. Throws
// NumericError for a non-finite loss and OptimizerError for a non-finite
// gradient; the model is left untouched in both cases.
double train_step(model::Model& model, nk::AmsGrad& optimizer, const Batch& batch);

// Forward over a whole recording [C, E * 3840]. With `chunk_epochs` > 0 the
// input is cut into chunks of that many epochs extended on both sides by
// `context_epochs`, and only each chunk's own rows are kept. Chunking is exact
// for the convolutional path when the context covers the receptive radius;
// attention weights become per-chunk.
nk::Array predict_recording(const model::Model& model, const nk::Array& signals, std::size_t resolution,
                            std::size_t chunk_epochs = 0, std::size_t context_epochs = 0);

// Resolution-1 predictions, scored per dataset and averaged over datasets.
// EvaluationError for an empty corpus or one without scoreable epochs.
double validate(const model::Model& model, std::span<const io::LoadedRecording> corpus,
                eval::AbsentPolicy policy = eval::AbsentPolicy::Zero);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_mf1 = 0.0;
  double wall_seconds = 0.0;
  bool improved = false;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 before the first epoch

  // Deterministic columns only: epoch,train_loss,valid_mf1,best_epoch.
  std::string to_csv() const;
  // epoch,wall_seconds.
  std::string timing_csv() const;
  static RunLog from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct TrainOptions {
  // Output directory for best.ckpt, state.ckpt, runlog.csv and timing.csv;
  // empty keeps everything in memory.
  std::filesystem::path out_dir;
  bool resume = false;
  // Identifies the experiment; a resumed run refuses a state file written
  // under another hash.
  std::string config_hash;
  // Replaces validate() (tests).
  std::function<double(const model::Model&)> validator;
  std::function<void(const EpochRecord&, const model::Model&)> on_epoch;
};

struct TrainResult {
  model::Model best;  // parameters of the best validation epoch
  RunLog log;
  std::string stop_reason;  // "patience", "max_epochs" or "non-finite loss"
  bool aborted = false;
};

// AMSGrad on stratified batches with validation after every epoch and early
// stopping on the validation macro F1. Sampling for epoch k uses a stream
// derived from (seed, k), so a resumed run continues the same sequence.
TrainResult train(const model::ModelConfig& config, std::span<const io::LoadedRecording> train_set,
                  std::span<const io::LoadedRecording> valid_set, const TrainConfig& train_config,
                  const sampling::SamplingConfig& sampling_config, const TrainOptions& options = {});

}  // namespace anysleep::train
