#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "anysleep/signal_io/recording.hpp"

namespace anysleep::io {

struct SynthParams {
  std::size_t eeg_channels = 2;
  std::size_t eog_channels = 1;
  std::size_t epochs = 120;
  double arousal_rate_per_hour = 0.0;
  double rate_hz = 128.0;
  // Probability that an epoch is replaced by an artifact and labeled Excluded.
  double artifact_probability = 0.0;
  // Standard deviation of the per-channel noise relative to the default.
  double noise_scale = 1.0;

  nlohmann::json to_json() const;
  static SynthParams from_json(const nlohmann::json& j);
};

// Row-stochastic stage transition matrix (Wake, N1, N2, N3, REM) of the
// generator; the chain starts in Wake.
const std::array<std::array<double, 5>, 5>& synth_transition_matrix();

struct SynthRecording {
  Recording recording;
  Hypnogram hypnogram;
  std::vector<EventInterval> arousals;
};

// Stage sequence from the Markov chain, then per-epoch signals from stage
// templates: N3 0.5-2 Hz high amplitude; N2 theta background with 12-14 Hz
// spindle bursts and K-complexes; REM 4-8 Hz with rapid eye movements on
// EOG; Wake 8-12 Hz alpha, beta and broadband activity with blinks; N1 low-
// amplitude theta with slow eye movements. Every EEG channel mixes a shared
// cortical source with its own realization of the same stage and
// independent noise. Arousals (Poisson count at the given hourly rate,
// 3-15 s) are Wake-template bursts inside sleep epochs, never preceded by
// Wake within 10 s and never overlapping; they are returned as ground truth
// while the epoch labels stay unchanged. Throws ConfigError for zero
// channels or fewer than 2 epochs.
SynthRecording synth_generate(std::uint64_t seed, const SynthParams& params);

}  // namespace anysleep::io
