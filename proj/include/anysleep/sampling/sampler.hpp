#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anysleep/core/rng.hpp"
#include "anysleep/core/stage.hpp"

namespace anysleep::sampling {

struct SamplingConfig {
  double alpha = 0.5;                 // dataset balance: 1 uniform, 0 proportional to size
  std::size_t sequence_epochs = 35;   // window length L
  std::size_t max_channels = 0;       // upper bound for the channel count; 0 = largest recording
  std::size_t max_retries = 1000;     // dataset re-draws before giving up on a stage

  void validate() const;
};

// p_d = alpha / N_d + (1 - alpha) * n_d / sum(n). ConfigError on empty
// counts, zero counts or alpha outside [0, 1].
std::vector<double> dataset_probs(double alpha, std::span<const std::size_t> counts);

// p_n = 1 / (n * H_N) for n = 1..N, where H_N is the N-th harmonic number.
std::vector<double> channel_count_probs(std::size_t max_channels);

// What the sampler needs to know about one recording.
struct RecordingIndex {
  std::vector<Stage> labels;
  std::size_t channels = 0;
};

struct DatasetIndex {
  std::string name;
  std::vector<RecordingIndex> recordings;
};

struct BatchSample {
  std::size_t dataset = 0;
  std::size_t recording = 0;
  std::vector<std::size_t> channels;  // indices into the recording, may repeat
  std::size_t start = 0;              // first epoch of the window
  std::size_t length = 0;             // window length in epochs
  std::size_t anchor = 0;             // absolute epoch index, inside the window
  Stage stage = Stage::Wake;          // label of the anchor epoch
};

// n channel indices out of `available`: uniform without replacement when
// n <= available, otherwise uniform with replacement. Order is random.
std::vector<std::size_t> subsample_channels(Rng& rng, std::size_t available, std::size_t n);

// Stage-stratified sequence sampler. Owns its generator, so equal seeds give
// equal sample streams.
class Sampler {
 public:
  // Throws ConfigError for an empty corpus, a recording without channels or
  // a recording shorter than the window.
  Sampler(std::vector<DatasetIndex> datasets, SamplingConfig config, std::uint64_t seed);

  // Uniform stage, dataset by dataset_probs, uniform recording, uniform
  // anchor epoch of that stage (retrying from the dataset draw when the
  // recording lacks it), uniform offset of the anchor inside the window. A
  // window crossing a recording edge is shifted inward. SamplingError after
  // max_retries failed draws.
  BatchSample draw_sequence();

  // One channel count per batch from channel_count_probs, then an
  // independent channel subset per sample.
  std::vector<BatchSample> draw_batch(std::size_t batch_size);

  const std::vector<double>& dataset_probabilities() const { return dataset_probs_; }
  const std::vector<double>& channel_probabilities() const { return channel_probs_; }
  std::size_t max_channels() const { return channel_probs_.size(); }
  Rng& rng() { return rng_; }

 private:
  std::vector<DatasetIndex> datasets_;
  // by_stage_[d][r][s] lists epochs of stage s in recording r of dataset d.
  std::vector<std::vector<std::vector<std::vector<std::size_t>>>> by_stage_;
  SamplingConfig config_;
  std::vector<double> dataset_probs_;
  std::vector<double> channel_probs_;
  Rng rng_;
};

}  // namespace anysleep::sampling
