#include "anysleep/sampling/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "anysleep/core/errors.hpp"

namespace anysleep::sampling {

void SamplingConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("sampling: alpha must lie in [0, 1]");
  if (sequence_epochs == 0) throw ConfigError("sampling: sequence length must be at least 1 epoch");
  if (max_retries == 0) throw ConfigError("sampling: max_retries must be positive");
}

std::vector<double> dataset_probs(double alpha, std::span<const std::size_t> counts) {
  if (counts.empty()) throw ConfigError("dataset_probs: no datasets");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("dataset_probs: alpha must lie in [0, 1]");
  double total = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) throw ConfigError("dataset_probs: every dataset needs at least one recording");
    total += static_cast<double>(c);
  }
  const double uniform = alpha / static_cast<double>(counts.size());
  std::vector<double> p;
  p.reserve(counts.size());
  for (std::size_t c : counts) p.push_back(uniform + (1.0 - alpha) * static_cast<double>(c) / total);
  return p;
}

std::vector<double> channel_count_probs(std::size_t max_channels) {
  if (max_channels == 0) throw ConfigError("channel_count_probs: at least one channel is required");
  // Summed smallest-first for accuracy.
  double harmonic = 0.0;
  for (std::size_t i = max_channels; i >= 1; --i) harmonic += 1.0 / static_cast<double>(i);
  std::vector<double> p(max_channels);
  for (std::size_t n = 1; n <= max_channels; ++n) p[n - 1] = 1.0 / (static_cast<double>(n) * harmonic);
  return p;
}

std::vector<std::size_t> subsample_channels(Rng& rng, std::size_t available, std::size_t n) {
  if (available == 0) throw ConfigError("subsample_channels: recording has no channels");
  if (n == 0) throw ConfigError("subsample_channels: n must be at least 1");
  std::vector<std::size_t> out;
  out.reserve(n);
  if (n > available) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::size_t>(rng.below(available)));
    return out;
  }
  std::vector<std::size_t> pool(available);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(available - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

Sampler::Sampler(std::vector<DatasetIndex> datasets, SamplingConfig config, std::uint64_t seed)
    : datasets_(std::move(datasets)), config_(config), rng_(Rng::stream(seed, "sampler")) {
  config_.validate();
  if (datasets_.empty()) throw ConfigError("sampler: no datasets");
  std::vector<std::size_t> counts;
  std::size_t widest = 0;
  for (const DatasetIndex& d : datasets_) {
    if (d.recordings.empty()) throw ConfigError("sampler: dataset '" + d.name + "' has no recordings");
    counts.push_back(d.recordings.size());
    auto& per_rec = by_stage_.emplace_back();
    for (const RecordingIndex& r : d.recordings) {
      if (r.channels == 0) throw ConfigError("sampler: a recording of '" + d.name + "' has no channels");
      if (r.labels.size() < config_.sequence_epochs) {
        throw ConfigError("sampler: a recording of '" + d.name + "' is shorter than the " +
                          std::to_string(config_.sequence_epochs) + "-epoch window");
      }
      widest = std::max(widest, r.channels);
      auto& stages = per_rec.emplace_back(kNumStages);
      for (std::size_t e = 0; e < r.labels.size(); ++e) {
        if (is_scored(r.labels[e])) stages[stage_index(r.labels[e])].push_back(e);
      }
    }
  }
  dataset_probs_ = dataset_probs(config_.alpha, counts);
  channel_probs_ = channel_count_probs(config_.max_channels > 0 ? config_.max_channels : widest);
}

BatchSample Sampler::draw_sequence() {
  const Stage stage = kScoredStages[rng_.below(kScoredStages.size())];
  const std::size_t s = stage_index(stage);
  for (std::size_t attempt = 0; attempt < config_.max_retries; ++attempt) {
    const std::size_t d = rng_.categorical(dataset_probs_);
    const std::size_t r = static_cast<std::size_t>(rng_.below(datasets_[d].recordings.size()));
    const auto& epochs = by_stage_[d][r][s];
    if (epochs.empty()) continue;
    BatchSample out;
    out.dataset = d;
    out.recording = r;
    out.stage = stage;
    out.anchor = epochs[rng_.below(epochs.size())];
    out.length = config_.sequence_epochs;
    const std::size_t offset = static_cast<std::size_t>(rng_.below(out.length));
    const std::size_t total = datasets_[d].recordings[r].labels.size();
    const std::size_t start = out.anchor >= offset ? out.anchor - offset : 0;
    out.start = std::min(start, total - out.length);
    return out;
  }
  throw SamplingError("no recording with stage " + std::string(stage_code(stage)) + " found after " +
                      std::to_string(config_.max_retries) + " draws");
}

std::vector<BatchSample> Sampler::draw_batch(std::size_t batch_size) {
  const std::size_t n = rng_.categorical(channel_probs_) + 1;
  std::vector<BatchSample> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    BatchSample sample = draw_sequence();
    sample.channels = subsample_channels(rng_, datasets_[sample.dataset].recordings[sample.recording].channels, n);
    batch.push_back(std::move(sample));
  }
  return batch;
}

}  // namespace anysleep::sampling
