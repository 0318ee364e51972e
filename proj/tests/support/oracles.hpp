#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Each one is written directly from the definition, without the
// bookkeeping the library uses for speed.

#include <algorithm>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "anysleep/core/rng.hpp"
#include "anysleep/core/stage.hpp"
#include "anysleep/hifreq/hifreq.hpp"

namespace anysleep::oracle {

// Wake-heavy random timeline: alternating runs with random lengths.
inline hifreq::StageTimeline random_timeline(Rng& rng, std::size_t resolution, std::size_t bins) {
  hifreq::StageTimeline t{resolution, {}};
  const double wake_share = rng.uniform(0.1, 0.6);
  const std::size_t max_run = 1 + rng.below(12);
  while (t.stages.size() < bins) {
    const bool wake = rng.uniform() < wake_share;
    const Stage s = wake ? Stage::Wake : kScoredStages[1 + rng.below(4)];
    const std::size_t len = 1 + rng.below(max_run);
    for (std::size_t k = 0; k < len && t.stages.size() < bins; ++k) t.stages.push_back(s);
  }
  return t;
}

// Arousal pipeline on bin indices with integer arithmetic (the merge
// fraction is 1/10, so gap < span/10 <=> 10 gap < span). Returns [begin, end)
// bin ranges.
inline std::vector<std::pair<std::size_t, std::size_t>> arousal_bins(const hifreq::StageTimeline& t) {
  const std::size_t r = t.resolution;
  const auto seconds_to_units = [&](double s) { return s * static_cast<double>(r) / 30.0; };
  std::vector<std::pair<std::size_t, std::size_t>> segs;
  for (std::size_t i = 0; i < t.stages.size(); ++i) {
    const bool w = t.stages[i] == Stage::Wake;
    const bool prev = i > 0 && t.stages[i - 1] == Stage::Wake;
    if (w && !prev) segs.push_back({i, i + 1});
    if (w && prev) segs.back().second = i + 1;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      const std::size_t span = segs[i + 1].second - segs[i].first;
      const std::size_t gap = segs[i + 1].first - segs[i].second;
      if (10 * gap < span && static_cast<double>(span) <= seconds_to_units(15.0)) {
        segs[i].second = segs[i + 1].second;
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        changed = true;
        break;  // restart from the left
      }
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const double step = 30.0 / static_cast<double>(r);
  for (const auto& [b, e] : segs) {
    bool wake_before = false;
    for (std::size_t j = 0; j < b; ++j) {
      const double bin_end = static_cast<double>(j + 1) * step;
      if (bin_end > static_cast<double>(b) * step - 10.0 && t.stages[j] == Stage::Wake) wake_before = true;
    }
    const double dur = static_cast<double>(e - b) * step;
    if (!wake_before && dur >= 3.0 && dur <= 15.0) out.push_back({b, e});
  }
  return out;
}

// Repeatedly takes the globally best remaining (candidate, annotation) pair.
inline std::vector<std::pair<std::size_t, std::size_t>> greedy_iou_match(const std::vector<io::EventInterval>& c,
                                                                         const std::vector<io::EventInterval>& a,
                                                                         double threshold) {
  std::vector<bool> uc(c.size()), ua(a.size());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (;;) {
    double best = -1.0;
    std::pair<std::size_t, std::size_t> arg{0, 0};
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (uc[i] || ua[j]) continue;
        const double lo = std::max(c[i].onset, a[j].onset), hi = std::min(c[i].end(), a[j].end());
        if (hi <= lo) continue;
        const double iou = (hi - lo) / (std::max(c[i].end(), a[j].end()) - std::min(c[i].onset, a[j].onset));
        if (iou < threshold) continue;
        if (iou > best) best = iou, arg = {i, j};
      }
    }
    if (best < 0.0) break;
    uc[arg.first] = ua[arg.second] = true;
    out.push_back(arg);
  }
  return out;
}

inline std::vector<std::array<Stage, 3>> all_triplets() {
  std::vector<std::array<Stage, 3>> out;
  for (Stage a : kScoredStages) {
    for (Stage b : kScoredStages) {
      for (Stage c : kScoredStages) {
        if (a != b && b != c) out.push_back({a, b, c});
      }
    }
  }
  return out;
}

// Triplet counts per full 180-epoch block after trimming leading and trailing
// Wake epochs of `trim`, by scanning every window against every triplet.
inline std::vector<std::vector<std::uint64_t>> triplet_blocks(const hifreq::StageTimeline& t,
                                                              const std::vector<Stage>& trim) {
  const auto triples = all_triplets();
  const std::size_t r = t.resolution, epochs = trim.size();
  std::size_t e0 = 0, e1 = epochs;
  while (e0 < epochs && trim[e0] == Stage::Wake) ++e0;
  while (e1 > e0 && trim[e1 - 1] == Stage::Wake) --e1;
  std::vector<std::vector<std::uint64_t>> blocks;
  for (std::size_t b = 0; b < (e1 - e0) / 180; ++b) {
    std::vector<std::uint64_t> counts(triples.size(), 0);
    const std::size_t lo = (e0 + 180 * b) * r, hi = lo + 180 * r;
    for (std::size_t i = lo; i + 2 < hi; ++i) {
      for (std::size_t k = 0; k < triples.size(); ++k) {
        if (t.stages[i] == triples[k][0] && t.stages[i + 1] == triples[k][1] && t.stages[i + 2] == triples[k][2]) {
          ++counts[k];
        }
      }
    }
    blocks.push_back(counts);
  }
  return blocks;
}

// Per stage, count directly over the epoch pairs; Excluded truth epochs are
// skipped. Stages absent from both sequences are dropped or scored 0.
inline double macro_f1(const std::vector<Stage>& pred, const std::vector<Stage>& truth, bool exclude_absent) {
  double sum = 0.0;
  int used = 0;
  for (Stage s : kScoredStages) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == Stage::Excluded) continue;
      const bool t = truth[i] == s, p = pred[i] == s;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    if (tp + fp + fn == 0) {
      if (!exclude_absent) ++used;
      continue;
    }
    sum += 2.0 * tp / (2.0 * tp + fp + fn);
    ++used;
  }
  return sum / used;
}

}  // namespace anysleep::oracle
