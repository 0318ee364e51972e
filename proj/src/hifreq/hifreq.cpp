#include "anysleep/hifreq/hifreq.hpp"

#include <algorithm>
#include <cmath>

#include "anysleep/core/errors.hpp"
#include "anysleep/numkernel/autodiff.hpp"
#include "anysleep/numkernel/ops.hpp"

namespace anysleep::hifreq {

StageTimeline timeline_from_probabilities(const nk::Array& probabilities, std::size_t resolution) {
  model::require_resolution(resolution);
  if (probabilities.rank() != 2 || probabilities.dim(1) != kNumStages) {
    throw DimensionError("timeline: expected [bins, 5] probabilities");
  }
  StageTimeline t{resolution, {}};
  t.stages.reserve(probabilities.dim(0));
  for (std::size_t i = 0; i < probabilities.dim(0); ++i) {
    const auto row = probabilities.row(i);
    t.stages.push_back(kScoredStages[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())]);
  }
  return t;
}

std::vector<SweepEntry> resolution_sweep(const model::Model& model, const nk::Array& signals,
                                         std::span<const std::size_t> resolutions) {
  for (std::size_t r : resolutions) model::require_resolution(r);
  const model::Prediction base = model::predict(model, signals, 1, true);
  const nk::Var full = nk::leaf(base.full_rate_logits);
  std::vector<SweepEntry> out;
  out.reserve(resolutions.size());
  for (std::size_t r : resolutions) {
    const std::size_t window = kSamplesPerEpoch / r;
    const nk::Var logits = nk::transpose(nk::pool_avg(full, window, window));
    out.push_back({r, nk::softmax_rows(logits).value()});
  }
  return out;
}

double wake_overlap_fraction(const StageTimeline& timeline, std::span<const io::EventInterval> events) {
  const double step = timeline.step_seconds();
  double total = 0.0, wake = 0.0;
  for (const io::EventInterval& e : events) {
    if (e.onset < 0.0 || e.end() > timeline.duration_seconds() + 1e-9) {
      throw EvaluationError("wake overlap: event extends past the prediction timeline");
    }
    total += e.duration;
    const auto first = static_cast<std::size_t>(std::floor(e.onset / step));
    for (std::size_t i = first; i < timeline.stages.size() && static_cast<double>(i) * step < e.end(); ++i) {
      if (timeline.stages[i] != Stage::Wake) continue;
      const double lo = std::max(e.onset, static_cast<double>(i) * step);
      const double hi = std::min(e.end(), static_cast<double>(i + 1) * step);
      if (hi > lo) wake += hi - lo;
    }
  }
  if (!(total > 0.0)) throw EvaluationError("wake overlap: events have zero total duration");
  return wake / total;
}

namespace {

constexpr double kTolerance = 1e-9;

struct Run {
  std::size_t begin = 0;  // bins
  std::size_t end = 0;
};

std::vector<Run> wake_runs(const std::vector<Stage>& stages) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < stages.size();) {
    if (stages[i] != Stage::Wake) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < stages.size() && stages[j] == Stage::Wake) ++j;
    runs.push_back({i, j});
    i = j;
  }
  return runs;
}

}  // namespace

std::vector<io::EventInterval> derive_arousals(const StageTimeline& timeline, const ArousalRules& rules) {
  const double step = timeline.step_seconds();
  const std::vector<Run> runs = wake_runs(timeline.stages);

  std::vector<Run> merged = runs;
  const auto mergeable = [&](const Run& a, const Run& b) {
    const double span = static_cast<double>(b.end - a.begin) * step;
    const double gap = static_cast<double>(b.begin - a.end) * step;
    // Ties within rounding are treated as equal.
    return gap < rules.merge_gap_fraction * span - kTolerance && span <= rules.max_merged_seconds + kTolerance;
  };
  // Pairs left of a merge are unaffected, so after merging at i only the
  // pair (i - 1, i) can newly qualify further left.
  for (std::size_t i = 0; i + 1 < merged.size();) {
    if (mergeable(merged[i], merged[i + 1])) {
      merged[i].end = merged[i + 1].end;
      merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      if (i > 0) --i;
    } else {
      ++i;
    }
  }

  // Prefix counts of Wake bins on the original timeline.
  std::vector<std::size_t> wake_before(timeline.stages.size() + 1, 0);
  for (std::size_t i = 0; i < timeline.stages.size(); ++i) {
    wake_before[i + 1] = wake_before[i] + (timeline.stages[i] == Stage::Wake ? 1 : 0);
  }

  std::vector<io::EventInterval> out;
  for (const Run& s : merged) {
    const double onset = static_cast<double>(s.begin) * step;
    const double window_start = std::max(0.0, onset - rules.lookback_seconds);
    // First bin whose interval reaches past window_start.
    auto lo = static_cast<std::size_t>(std::floor(window_start / step));
    lo = std::min(lo, s.begin);
    if (wake_before[s.begin] - wake_before[lo] > 0) continue;
    const double duration = static_cast<double>(s.end - s.begin) * step;
    if (duration < rules.min_seconds - kTolerance || duration > rules.max_seconds + kTolerance) continue;
    out.push_back({onset, duration, io::EventKind::Candidate});
  }
  return out;
}

double overlap_ratio(const io::EventInterval& a, const io::EventInterval& b, Overlap measure) {
  const double inter = std::max(0.0, std::min(a.end(), b.end()) - std::max(a.onset, b.onset));
  if (measure == Overlap::SummedLength) {
    const double sum = a.duration + b.duration;
    return sum > 0.0 ? inter / sum : 0.0;
  }
  const double uni = a.duration + b.duration - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

EventMatch iou_match(std::span<const io::EventInterval> candidates, std::span<const io::EventInterval> annotations,
                     double threshold, Overlap measure) {
  std::vector<EventMatch::Pair> eligible;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t a = 0; a < annotations.size(); ++a) {
      const double v = overlap_ratio(candidates[c], annotations[a], measure);
      if (v > 0.0 && v >= threshold) eligible.push_back({c, a, v});
    }
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const EventMatch::Pair& x, const EventMatch::Pair& y) { return x.overlap > y.overlap; });
  EventMatch m;
  std::vector<bool> used_c(candidates.size(), false), used_a(annotations.size(), false);
  for (const EventMatch::Pair& p : eligible) {
    if (used_c[p.candidate] || used_a[p.annotation]) continue;
    used_c[p.candidate] = used_a[p.annotation] = true;
    m.pairs.push_back(p);
  }
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!used_c[c]) m.false_positives.push_back(c);
  }
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    if (!used_a[a]) m.false_negatives.push_back(a);
  }
  return m;
}

DetectionScores iou_prf(std::size_t true_positives, std::size_t false_positives, std::size_t false_negatives) {
  DetectionScores s;
  const auto tp = static_cast<double>(true_positives);
  const std::size_t pd = true_positives + false_positives, rd = true_positives + false_negatives;
  if (pd > 0) s.precision = tp / static_cast<double>(pd);
  if (rd > 0) s.recall = tp / static_cast<double>(rd);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  s.undefined = pd == 0 || rd == 0 || s.precision + s.recall == 0.0;
  return s;
}

DetectionScores iou_prf(const EventMatch& match) {
  return iou_prf(match.pairs.size(), match.false_positives.size(), match.false_negatives.size());
}

std::size_t triplet_index(Stage a, Stage b, Stage c) {
  if (!is_scored(a) || !is_scored(b) || !is_scored(c) || a == b || b == c) {
    throw ConfigError("triplet_index: need scored stages with a != b and b != c");
  }
  const std::size_t ia = stage_index(a), ib = stage_index(b), ic = stage_index(c);
  const std::size_t rb = ib - (ib > ia ? 1 : 0);
  const std::size_t rc = ic - (ic > ib ? 1 : 0);
  return ia * 16 + rb * 4 + rc;
}

std::array<Stage, 3> triplet_from_index(std::size_t index) {
  if (index >= kTripletCount) throw ConfigError("triplet_from_index: index out of range");
  const std::size_t ia = index / 16, rb = index / 4 % 4, rc = index % 4;
  const std::size_t ib = rb + (rb >= ia ? 1 : 0);
  const std::size_t ic = rc + (rc >= ib ? 1 : 0);
  return {kScoredStages[ia], kScoredStages[ib], kScoredStages[ic]};
}

TripletResult triplet_features(const StageTimeline& timeline, std::span<const Stage> trim_epochs) {
  const std::size_t r = timeline.resolution;
  if (trim_epochs.size() * r != timeline.stages.size()) {
    throw DimensionError("triplet_features: timeline covers " + std::to_string(timeline.stages.size()) +
                         " bins, trim labels " + std::to_string(trim_epochs.size()) + " epochs at resolution " +
                         std::to_string(r));
  }
  const auto is_sleep = [](Stage s) { return is_scored(s) && s != Stage::Wake; };
  TripletResult result;
  const auto first = std::find_if(trim_epochs.begin(), trim_epochs.end(), is_sleep);
  if (first == trim_epochs.end()) {
    result.too_short = true;
    return result;
  }
  const auto last = std::find_if(trim_epochs.rbegin(), trim_epochs.rend(), is_sleep);
  const auto e0 = static_cast<std::size_t>(first - trim_epochs.begin());
  const auto e1 = trim_epochs.size() - static_cast<std::size_t>(last - trim_epochs.rbegin());
  const std::size_t blocks = (e1 - e0) / kBlockEpochs;
  if (blocks == 0) {
    result.too_short = true;
    return result;
  }
  const std::size_t block_bins = kBlockEpochs * r;
  for (std::size_t b = 0; b < blocks; ++b) {
    TripletBlock block{b, {}};
    const std::size_t lo = e0 * r + b * block_bins;
    for (std::size_t i = lo; i + 2 < lo + block_bins; ++i) {
      const Stage s0 = timeline.stages[i], s1 = timeline.stages[i + 1], s2 = timeline.stages[i + 2];
      if (!is_scored(s0) || !is_scored(s1) || !is_scored(s2) || s0 == s1 || s1 == s2) continue;
      ++block.counts[triplet_index(s0, s1, s2)];
    }
    result.blocks.push_back(block);
  }
  return result;
}

std::string triplet_csv(const std::string& recording_id, std::size_t resolution, const TripletResult& result,
                        bool header) {
  std::string out;
  if (header) {
    out = "recording_id,block_index,resolution";
    for (std::size_t k = 0; k < kTripletCount; ++k) out += ",c" + std::to_string(k);
    out += '\n';
  }
  for (const TripletBlock& b : result.blocks) {
    out += recording_id + ',' + std::to_string(b.block_index) + ',' + std::to_string(resolution);
    for (std::uint64_t c : b.counts) out += ',' + std::to_string(c);
    out += '\n';
  }
  return out;
}

}  // namespace anysleep::hifreq
