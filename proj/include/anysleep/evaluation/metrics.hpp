#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "anysleep/core/rng.hpp"
#include "anysleep/core/stage.hpp"
#include "anysleep/numkernel/array.hpp"

namespace anysleep::eval {

// How stages with TP + FP + FN = 0 enter the macro average: left out, or
// counted as F1 = 0.
enum class AbsentPolicy { Exclude, Zero };
std::string_view policy_name(AbsentPolicy p);
AbsentPolicy policy_from_name(std::string_view name);  // ConfigError

enum class Scope { Recording, Dataset };
std::string_view scope_name(Scope s);
Scope scope_from_name(std::string_view name);  // ConfigError

// Confusion matrix over the five scored stages, rows = truth, columns =
// prediction.
struct ConfusionCounts {
  std::array<std::array<std::uint64_t, kNumStages>, kNumStages> matrix{};
  // Scoreable epochs predicted as Excluded, by true stage (misses only).
  std::array<std::uint64_t, kNumStages> unpredicted{};

  void add(Stage truth, Stage predicted);
  std::uint64_t tp(std::size_t stage) const;
  std::uint64_t fp(std::size_t stage) const;
  std::uint64_t fn(std::size_t stage) const;
  std::uint64_t tn(std::size_t stage) const;
  std::uint64_t total() const;
  std::uint64_t correct() const;
  ConfusionCounts& operator+=(const ConfusionCounts& other);
};

// Counts over the epochs whose truth label is scored. EvaluationError on a
// length mismatch.
ConfusionCounts confusion(std::span<const Stage> predicted, std::span<const Stage> truth);

struct F1Scores {
  std::array<std::optional<double>, kNumStages> per_stage;  // empty when absent
  double macro = 0.0;
};

// Per-stage 2TP / (2TP + FP + FN) and their unweighted mean. EvaluationError
// when no epoch is scoreable.
F1Scores f1_scores(const ConfusionCounts& counts, AbsentPolicy policy);

double macro_f1(std::span<const Stage> predicted, std::span<const Stage> truth,
                AbsentPolicy policy = AbsentPolicy::Exclude);

// Recording scope: one MF1 per recording. Dataset scope: counts summed first,
// one MF1 overall. EvaluationError for an empty set.
std::vector<double> aggregate(std::span<const ConfusionCounts> recordings, Scope scope, AbsentPolicy policy);

// Row-wise argmax of [E, 5] probabilities; the lowest stage wins exact ties.
std::vector<Stage> argmax_stages(const nk::Array& probabilities);

// Per-epoch modal label across sequences, ties drawn uniformly with `rng`.
// EvaluationError for no sequences or unequal lengths.
std::vector<Stage> pairwise_majority_vote(std::span<const std::vector<Stage>> predictions, Rng& rng);

struct Consensus {
  std::vector<Stage> labels;
  std::vector<std::size_t> ranking;  // scorer indices, best first
  std::vector<double> agreement;     // per scorer, mean accuracy against the others
};

// Ranks scorers by mean epoch-wise agreement with every other scorer (ties:
// lower index first), keeps the best four, and takes the per-epoch majority
// among them; ties go to the best-ranked scorer proposing a tied label.
// EvaluationError for fewer than 2 scorers or unequal lengths.
Consensus scorer_consensus(std::span<const std::vector<Stage>> scorers);

// Per-recording result for reports.
struct RecordingResult {
  std::string dataset;
  std::string id;
  ConfusionCounts counts;
};

struct ReportOptions {
  AbsentPolicy recording_policy = AbsentPolicy::Exclude;
  AbsentPolicy dataset_policy = AbsentPolicy::Zero;
  Scope scope = Scope::Dataset;
  std::optional<std::uint64_t> seed;
};

// Metrics JSON: per-recording and per-dataset MF1 with per-stage F1 and
// confusion matrices, the policies, the scope and the seed. `summary` holds
// the mean of the per-dataset (or per-recording, for recording scope) MF1.
nlohmann::json metrics_report(std::span<const RecordingResult> results, const ReportOptions& options);

// Mean over datasets of the dataset-scope MF1 under `policy`.
double mean_dataset_mf1(std::span<const RecordingResult> results, AbsentPolicy policy);

}  // namespace anysleep::eval
