#include "anysleep/evaluation/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "anysleep/core/errors.hpp"

namespace anysleep::eval {

std::string_view policy_name(AbsentPolicy p) { return p == AbsentPolicy::Exclude ? "exclude" : "zero"; }

AbsentPolicy policy_from_name(std::string_view name) {
  if (name == "exclude") return AbsentPolicy::Exclude;
  if (name == "zero") return AbsentPolicy::Zero;
  throw ConfigError("unknown absent-stage policy '" + std::string(name) + "' (expected exclude|zero)");
}

std::string_view scope_name(Scope s) { return s == Scope::Recording ? "recording" : "dataset"; }

Scope scope_from_name(std::string_view name) {
  if (name == "recording") return Scope::Recording;
  if (name == "dataset") return Scope::Dataset;
  throw ConfigError("unknown scope '" + std::string(name) + "' (expected recording|dataset)");
}

void ConfusionCounts::add(Stage truth, Stage predicted) {
  if (!is_scored(truth)) return;
  if (!is_scored(predicted)) {
    ++unpredicted[stage_index(truth)];
    return;
  }
  ++matrix[stage_index(truth)][stage_index(predicted)];
}

std::uint64_t ConfusionCounts::tp(std::size_t s) const { return matrix[s][s]; }

std::uint64_t ConfusionCounts::fp(std::size_t s) const {
  std::uint64_t n = 0;
  for (std::size_t t = 0; t < kNumStages; ++t) n += t == s ? 0 : matrix[t][s];
  return n;
}

std::uint64_t ConfusionCounts::fn(std::size_t s) const {
  std::uint64_t n = unpredicted[s];
  for (std::size_t p = 0; p < kNumStages; ++p) n += p == s ? 0 : matrix[s][p];
  return n;
}

std::uint64_t ConfusionCounts::tn(std::size_t s) const { return total() - tp(s) - fp(s) - fn(s); }

std::uint64_t ConfusionCounts::total() const {
  std::uint64_t n = std::accumulate(unpredicted.begin(), unpredicted.end(), std::uint64_t{0});
  for (const auto& row : matrix) n += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
  return n;
}

std::uint64_t ConfusionCounts::correct() const {
  std::uint64_t n = 0;
  for (std::size_t s = 0; s < kNumStages; ++s) n += matrix[s][s];
  return n;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  for (std::size_t t = 0; t < kNumStages; ++t) {
    for (std::size_t p = 0; p < kNumStages; ++p) matrix[t][p] += other.matrix[t][p];
  }
  for (std::size_t s = 0; s < kNumStages; ++s) unpredicted[s] += other.unpredicted[s];
  return *this;
}

ConfusionCounts confusion(std::span<const Stage> predicted, std::span<const Stage> truth) {
  if (predicted.size() != truth.size()) {
    throw EvaluationError("prediction has " + std::to_string(predicted.size()) + " epochs, truth has " +
                          std::to_string(truth.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) c.add(truth[i], predicted[i]);
  return c;
}

F1Scores f1_scores(const ConfusionCounts& counts, AbsentPolicy policy) {
  if (counts.total() == 0) throw EvaluationError("no scoreable epochs");
  F1Scores out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::uint64_t tp = counts.tp(s), fp = counts.fp(s), fn = counts.fn(s);
    const std::uint64_t denom = 2 * tp + fp + fn;
    if (denom == 0) {
      if (policy == AbsentPolicy::Zero) {
        out.per_stage[s] = 0.0;
        ++used;
      }
      continue;
    }
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    out.per_stage[s] = f1;
    sum += f1;
    ++used;
  }
  out.macro = used == 0 ? 0.0 : sum / static_cast<double>(used);
  return out;
}

double macro_f1(std::span<const Stage> predicted, std::span<const Stage> truth, AbsentPolicy policy) {
  return f1_scores(confusion(predicted, truth), policy).macro;
}

std::vector<double> aggregate(std::span<const ConfusionCounts> recordings, Scope scope, AbsentPolicy policy) {
  if (recordings.empty()) throw EvaluationError("aggregate: no recordings");
  if (scope == Scope::Recording) {
    std::vector<double> out;
    out.reserve(recordings.size());
    for (const ConfusionCounts& c : recordings) out.push_back(f1_scores(c, policy).macro);
    return out;
  }
  ConfusionCounts sum;
  for (const ConfusionCounts& c : recordings) sum += c;
  return {f1_scores(sum, policy).macro};
}

std::vector<Stage> argmax_stages(const nk::Array& probabilities) {
  if (probabilities.rank() != 2 || probabilities.dim(1) != kNumStages) {
    throw DimensionError("argmax_stages expects [E, 5] probabilities");
  }
  std::vector<Stage> out(probabilities.dim(0));
  for (std::size_t e = 0; e < out.size(); ++e) {
    const auto row = probabilities.row(e);
    out[e] = kScoredStages[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
  }
  return out;
}

namespace {

void require_equal_lengths(std::span<const std::vector<Stage>> seqs, const char* what) {
  for (const auto& s : seqs) {
    if (s.size() != seqs[0].size()) throw EvaluationError(std::string(what) + ": sequences differ in length");
  }
}

constexpr std::size_t kLabelSlots = kNumStages + 1;

}  // namespace

std::vector<Stage> pairwise_majority_vote(std::span<const std::vector<Stage>> predictions, Rng& rng) {
  if (predictions.empty()) throw EvaluationError("majority vote: no sequences");
  require_equal_lengths(predictions, "majority vote");
  std::vector<Stage> out(predictions[0].size());
  std::vector<std::size_t> tied;
  for (std::size_t e = 0; e < out.size(); ++e) {
    std::array<std::size_t, kLabelSlots> votes{};
    for (const auto& p : predictions) ++votes[stage_index(p[e])];
    const std::size_t best = *std::max_element(votes.begin(), votes.end());
    tied.clear();
    for (std::size_t s = 0; s < kLabelSlots; ++s) {
      if (votes[s] == best) tied.push_back(s);
    }
    const std::size_t pick = tied.size() == 1 ? tied[0] : tied[rng.below(tied.size())];
    out[e] = static_cast<Stage>(pick);
  }
  return out;
}

Consensus scorer_consensus(std::span<const std::vector<Stage>> scorers) {
  if (scorers.size() < 2) throw EvaluationError("consensus needs at least 2 scorers");
  require_equal_lengths(scorers, "consensus");
  const std::size_t k = scorers.size(), n = scorers[0].size();
  Consensus out;
  out.agreement.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      std::size_t same = 0;
      for (std::size_t e = 0; e < n; ++e) same += scorers[a][e] == scorers[b][e] ? 1 : 0;
      out.agreement[a] += n == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(n);
    }
    out.agreement[a] /= static_cast<double>(k - 1);
  }
  out.ranking.resize(k);
  std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t x, std::size_t y) { return out.agreement[x] > out.agreement[y]; });
  const std::size_t voters = std::min<std::size_t>(4, k);

  out.labels.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    std::array<std::size_t, kLabelSlots> votes{};
    for (std::size_t r = 0; r < voters; ++r) ++votes[stage_index(scorers[out.ranking[r]][e])];
    const std::size_t best = *std::max_element(votes.begin(), votes.end());
    for (std::size_t r = 0; r < voters; ++r) {
      const Stage label = scorers[out.ranking[r]][e];
      if (votes[stage_index(label)] == best) {
        out.labels[e] = label;
        break;
      }
    }
  }
  return out;
}

namespace {

nlohmann::json counts_json(const ConfusionCounts& c, AbsentPolicy policy) {
  const F1Scores f = f1_scores(c, policy);
  nlohmann::json per_stage = nlohmann::json::object();
  for (std::size_t s = 0; s < kNumStages; ++s) {
    per_stage[std::string(stage_code(kScoredStages[s]))] =
        f.per_stage[s] ? nlohmann::json(*f.per_stage[s]) : nlohmann::json(nullptr);
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : c.matrix) matrix.push_back(row);
  return {{"mf1", f.macro}, {"per_stage_f1", per_stage}, {"confusion", matrix}, {"epochs", c.total()}};
}

std::vector<std::pair<std::string, ConfusionCounts>> by_dataset(std::span<const RecordingResult> results) {
  std::vector<std::pair<std::string, ConfusionCounts>> out;
  for (const RecordingResult& r : results) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.dataset; });
    if (it == out.end()) {
      out.emplace_back(r.dataset, ConfusionCounts{});
      it = out.end() - 1;
    }
    it->second += r.counts;
  }
  return out;
}

}  // namespace

double mean_dataset_mf1(std::span<const RecordingResult> results, AbsentPolicy policy) {
  if (results.empty()) throw EvaluationError("no recordings to score");
  const auto groups = by_dataset(results);
  double sum = 0.0;
  for (const auto& [name, counts] : groups) sum += f1_scores(counts, policy).macro;
  return sum / static_cast<double>(groups.size());
}

nlohmann::json metrics_report(std::span<const RecordingResult> results, const ReportOptions& options) {
  if (results.empty()) throw EvaluationError("no recordings to score");
  nlohmann::json recordings = nlohmann::json::array();
  double recording_sum = 0.0;
  for (const RecordingResult& r : results) {
    nlohmann::json j = counts_json(r.counts, options.recording_policy);
    recording_sum += j["mf1"].get<double>();
    j["dataset"] = r.dataset;
    j["id"] = r.id;
    recordings.push_back(std::move(j));
  }
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& [name, counts] : by_dataset(results)) {
    nlohmann::json j = counts_json(counts, options.dataset_policy);
    j["dataset"] = name;
    datasets.push_back(std::move(j));
  }
  const double summary = options.scope == Scope::Recording
                             ? recording_sum / static_cast<double>(results.size())
                             : mean_dataset_mf1(results, options.dataset_policy);
  return {{"scope", scope_name(options.scope)},
          {"policies", {{"recording", policy_name(options.recording_policy)}, {"dataset", policy_name(options.dataset_policy)}}},
          {"seed", options.seed ? nlohmann::json(*options.seed) : nlohmann::json(nullptr)},
          {"summary_mf1", summary},
          {"recordings", recordings},
          {"datasets", datasets}};
}

}  // namespace anysleep::eval
