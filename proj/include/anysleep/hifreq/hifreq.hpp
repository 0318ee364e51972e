#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anysleep/core/stage.hpp"
#include "anysleep/model/network.hpp"
#include "anysleep/signal_io/recording.hpp"

namespace anysleep::hifreq {

// Stage predictions on a regular grid: bin i covers [i * step, (i + 1) * step)
// seconds, step = 30 / resolution.
struct StageTimeline {
  std::size_t resolution = 1;
  std::vector<Stage> stages;

  double step_seconds() const { return kEpochSeconds / static_cast<double>(resolution); }
  double duration_seconds() const { return step_seconds() * static_cast<double>(stages.size()); }
};

// Argmax of [bins, 5] probabilities. ConfigError for unsupported resolutions.
StageTimeline timeline_from_probabilities(const nk::Array& probabilities, std::size_t resolution);

struct SweepEntry {
  std::size_t resolution = 1;
  nk::Array probabilities;  // [epochs * resolution, 5]
};

// Predictions at every requested resolution from a single forward pass: the
// full-rate classifier map is pooled once per resolution.
std::vector<SweepEntry> resolution_sweep(const model::Model& model, const nk::Array& signals,
                                         std::span<const std::size_t> resolutions = model::kResolutions);

// Share of the total annotated event time that is predicted Wake. Throws
// EvaluationError when the events have zero total duration or extend past
// the timeline.
double wake_overlap_fraction(const StageTimeline& timeline, std::span<const io::EventInterval> events);

struct ArousalRules {
  double merge_gap_fraction = 0.10;  // gap must be below this share of the merged span
  double max_merged_seconds = 15.0;
  double lookback_seconds = 10.0;
  double min_seconds = 3.0;
  double max_seconds = 15.0;
};

// Candidate arousals from Wake runs:
//  1. maximal runs of Wake bins;
//  2. the leftmost adjacent pair with gap < fraction * merged span and merged
//     span <= max_merged is merged, repeatedly, until no pair qualifies;
//  3. segments with any Wake bin in the look-back window before their onset
//     (original predictions, window clipped at 0) are dropped;
//  4. segments shorter than min or longer than max are dropped.
// Bins longer than max_seconds therefore never yield candidates.
std::vector<io::EventInterval> derive_arousals(const StageTimeline& timeline, const ArousalRules& rules = {});

// How "overlapped by at least x of their combined length" is measured.
enum class Overlap {
  Union,        // intersection / union (IoU)
  SummedLength  // intersection / (length a + length b)
};

double overlap_ratio(const io::EventInterval& a, const io::EventInterval& b, Overlap measure = Overlap::Union);

struct EventMatch {
  struct Pair {
    std::size_t candidate = 0;
    std::size_t annotation = 0;
    double overlap = 0.0;
  };
  std::vector<Pair> pairs;  // in acceptance order
  std::vector<std::size_t> false_positives;  // unmatched candidate indices, ascending
  std::vector<std::size_t> false_negatives;  // unmatched annotation indices, ascending
};

// One-to-one greedy matching: eligible pairs (overlap >= threshold and a
// non-empty intersection) are taken in descending overlap order, ties by
// candidate then annotation index.
EventMatch iou_match(std::span<const io::EventInterval> candidates, std::span<const io::EventInterval> annotations,
                     double threshold = 0.2, Overlap measure = Overlap::Union);

struct DetectionScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool undefined = false;  // some ratio had a zero denominator and was set to 0
};

DetectionScores iou_prf(std::size_t true_positives, std::size_t false_positives, std::size_t false_negatives);
DetectionScores iou_prf(const EventMatch& match);

inline constexpr std::size_t kTripletCount = 80;
inline constexpr std::size_t kBlockEpochs = 180;  // 1.5 h

// Lexicographic index of (a, b, c) among triples with a != b and b != c.
// ConfigError for a non-qualifying or unscored triple.
std::size_t triplet_index(Stage a, Stage b, Stage c);
std::array<Stage, 3> triplet_from_index(std::size_t index);

struct TripletBlock {
  std::size_t block_index = 0;
  std::array<std::uint64_t, kTripletCount> counts{};
};

struct TripletResult {
  std::vector<TripletBlock> blocks;
  bool too_short = false;  // trimmed span holds no full block
};

// The timeline is trimmed to the first..last epoch (inclusive) whose
// `trim_epochs` label is a sleep stage, cut into full 1.5-h blocks, and every
// window of three consecutive bins inside a block with s0 != s1 != s2 is
// counted. Windows touching an unscored bin are skipped. DimensionError when
// the timeline and the trim labels disagree on the number of epochs.
TripletResult triplet_features(const StageTimeline& timeline, std::span<const Stage> trim_epochs);

// Header "recording_id,block_index,resolution,c0,...,c79" when `header`.
std::string triplet_csv(const std::string& recording_id, std::size_t resolution, const TripletResult& result,
                        bool header = true);

}  // namespace anysleep::hifreq
