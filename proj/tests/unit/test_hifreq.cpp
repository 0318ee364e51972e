#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"
#include "anysleep/hifreq/hifreq.hpp"
#include "oracles.hpp"

using namespace anysleep;
using namespace anysleep::hifreq;
using io::EventInterval;

namespace {

StageTimeline timeline(std::size_t resolution, const std::string& code) {
  // 'W' Wake, '1' N1, '2' N2, '3' N3, 'R' REM, 'X' Excluded.
  StageTimeline t{resolution, {}};
  for (char ch : code) {
    switch (ch) {
      case 'W': t.stages.push_back(Stage::Wake); break;
      case '1': t.stages.push_back(Stage::N1); break;
      case '2': t.stages.push_back(Stage::N2); break;
      case '3': t.stages.push_back(Stage::N3); break;
      case 'R': t.stages.push_back(Stage::REM); break;
      default: t.stages.push_back(Stage::Excluded); break;
    }
  }
  return t;
}

StageTimeline repeated(std::size_t resolution, Stage s, std::size_t n) {
  return StageTimeline{resolution, std::vector<Stage>(n, s)};
}

EventInterval ev(double onset, double duration) { return {onset, duration, io::EventKind::Arousal}; }

}  // namespace

TEST(Timeline, ArgmaxAndStep) {
  nk::Array p({3, 5}, {0.1, 0.6, 0.1, 0.1, 0.1, 0.9, 0.0, 0.0, 0.05, 0.05, 0.0, 0.0, 0.0, 0.2, 0.8});
  const StageTimeline t = timeline_from_probabilities(p, 2);
  EXPECT_EQ(t.stages, (std::vector<Stage>{Stage::N1, Stage::Wake, Stage::REM}));
  EXPECT_DOUBLE_EQ(t.step_seconds(), 15.0);
  EXPECT_DOUBLE_EQ(t.duration_seconds(), 45.0);
  EXPECT_THROW(timeline_from_probabilities(p, 3), ConfigError);
  EXPECT_THROW(timeline_from_probabilities(nk::Array({3, 4}), 1), DimensionError);
}

TEST(ResolutionSweep, MatchesDirectPredictionAtEveryResolution) {
  const model::Model m = model::Model::initialize(model::ModelConfig::make(2, 4, model::Fusion::Mid, 4, 5), 8);
  Rng rng(1);
  nk::Array x({2, 3 * kSamplesPerEpoch});
  for (double& v : x.values()) v = rng.normal();
  const auto sweep = resolution_sweep(m, x);
  ASSERT_EQ(sweep.size(), 14u);
  for (const SweepEntry& e : sweep) {
    EXPECT_EQ(e.probabilities.dim(0), 3 * e.resolution);
    const nk::Array direct = model::predict(m, x, e.resolution).probabilities;
    double worst = 0.0;
    for (std::size_t i = 0; i < direct.size(); ++i) worst = std::max(worst, std::abs(direct[i] - e.probabilities[i]));
    EXPECT_LT(worst, 1e-12) << "resolution " << e.resolution;
  }
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(resolution_sweep(m, x, bad), ConfigError);
}

TEST(WakeOverlap, HandExamples) {
  const std::vector<EventInterval> one{ev(5.0, 10.0)};
  EXPECT_DOUBLE_EQ(wake_overlap_fraction(repeated(30, Stage::Wake, 30), one), 1.0);
  EXPECT_DOUBLE_EQ(wake_overlap_fraction(repeated(30, Stage::N2, 30), one), 0.0);
  // 1-s bins, Wake over the first 4 s of a 10-s event.
  StageTimeline t = repeated(30, Stage::N2, 30);
  for (std::size_t i = 5; i < 9; ++i) t.stages[i] = Stage::Wake;
  EXPECT_DOUBLE_EQ(wake_overlap_fraction(t, one), 0.4);
  // Partial bins: 7.5-s bins, Wake in bin 1 = [7.5, 15).
  StageTimeline coarse = repeated(4, Stage::N2, 4);
  coarse.stages[1] = Stage::Wake;
  EXPECT_DOUBLE_EQ(wake_overlap_fraction(coarse, one), 0.75);
}

TEST(WakeOverlap, Errors) {
  const StageTimeline t = repeated(30, Stage::Wake, 30);
  EXPECT_THROW(wake_overlap_fraction(t, std::vector<EventInterval>{}), EvaluationError);
  EXPECT_THROW(wake_overlap_fraction(t, std::vector<EventInterval>{ev(3.0, 0.0)}), EvaluationError);
  EXPECT_THROW(wake_overlap_fraction(t, std::vector<EventInterval>{ev(25.0, 10.0)}), EvaluationError);
}

TEST(WakeOverlap, MatchesBinwiseOracleAndIsMonotone) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = model::kResolutions[1 + rng.below(8)];
    StageTimeline t = oracle::random_timeline(rng, r, 4 * r);
    const double total = t.duration_seconds();
    std::vector<EventInterval> events;
    for (int k = 0; k < 3; ++k) {
      const double d = rng.uniform(3.0, 15.0);
      events.push_back(ev(rng.uniform(0.0, total - d), d));
    }
    double wake = 0.0, all = 0.0;
    for (const auto& e : events) {
      all += e.duration;
      for (std::size_t i = 0; i < t.stages.size(); ++i) {
        const double lo = std::max(e.onset, i * t.step_seconds()), hi = std::min(e.end(), (i + 1) * t.step_seconds());
        if (hi > lo && t.stages[i] == Stage::Wake) wake += hi - lo;
      }
    }
    const double f = wake_overlap_fraction(t, events);
    EXPECT_NEAR(f, wake / all, 1e-12);
    // Enlarging the Wake set never lowers the fraction.
    t.stages[rng.below(t.stages.size())] = Stage::Wake;
    EXPECT_GE(wake_overlap_fraction(t, events), f - 1e-12);
  }
}

TEST(DeriveArousals, HandExamples) {
  EXPECT_TRUE(derive_arousals(repeated(30, Stage::N2, 60)).empty());
  // Runs [0,4) and [5,12) at 1-s steps merge into [0,12).
  const auto merged = derive_arousals(timeline(30, "WWWW2WWWWWWW222222222222222222"));
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_DOUBLE_EQ(merged[0].onset, 0.0);
  EXPECT_DOUBLE_EQ(merged[0].duration, 12.0);
  EXPECT_EQ(merged[0].kind, io::EventKind::Candidate);
  // A single 20-s run is too long.
  StageTimeline longrun = repeated(30, Stage::N2, 60);
  for (std::size_t i = 20; i < 40; ++i) longrun.stages[i] = Stage::Wake;
  EXPECT_TRUE(derive_arousals(longrun).empty());
  // Gap equal to 10% of the span does not merge: [0,4) + [5,10) spans 10 s with a 1-s gap.
  const auto tie = derive_arousals(timeline(30, "WWWW2WWWWW22222222222222222222"));
  ASSERT_EQ(tie.size(), 1u);
  EXPECT_DOUBLE_EQ(tie[0].onset, 0.0);
  // The second run has Wake 1 s before it and is dropped.
  EXPECT_DOUBLE_EQ(tie[0].duration, 4.0);
}

TEST(DeriveArousals, LookBackUsesOriginalPredictions) {
  // Wake 2 s long at 8 s, then a 5-s run at 15 s: the second run has Wake
  // inside its 10-s look-back and is dropped; the first is too short.
  StageTimeline t = repeated(30, Stage::N2, 60);
  for (std::size_t i = 8; i < 10; ++i) t.stages[i] = Stage::Wake;
  for (std::size_t i = 15; i < 20; ++i) t.stages[i] = Stage::Wake;
  EXPECT_TRUE(derive_arousals(t).empty());
  // Moving the short run earlier clears the look-back.
  StageTimeline u = repeated(30, Stage::N2, 60);
  for (std::size_t i = 2; i < 4; ++i) u.stages[i] = Stage::Wake;
  for (std::size_t i = 15; i < 20; ++i) u.stages[i] = Stage::Wake;
  const auto kept = derive_arousals(u);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].onset, 15.0);
  EXPECT_DOUBLE_EQ(kept[0].duration, 5.0);
}

TEST(DeriveArousals, ChainedMergesReachFixpoint) {
  // Runs [0,3), [4,6), [7,15) at 1-s steps. The first pair (span 6, gap 1)
  // does not qualify; the second (span 11, gap 1) does, after which the
  // first run joins the merged [4,15) (span 15, gap 1 < 1.5).
  const auto out = derive_arousals(timeline(30, "WWW2WW2WWWWWWWW222222222222222"));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].onset, 0.0);
  EXPECT_DOUBLE_EQ(out[0].duration, 15.0);
  // A fourth run one second later would push the span past 15 s; it stays
  // separate and is dropped by the look-back.
  const auto capped = derive_arousals(timeline(30, "WWW2WW2WWWWWWWW2WW222222222222222222222222"));
  ASSERT_EQ(capped.size(), 1u);
  EXPECT_DOUBLE_EQ(capped[0].duration, 15.0);
}

TEST(DeriveArousals, ThirtySecondBinsGiveNothing) {
  StageTimeline t = repeated(1, Stage::N2, 10);
  t.stages[4] = Stage::Wake;
  EXPECT_TRUE(derive_arousals(t).empty());
}

TEST(DeriveArousals, AgreesWithReferenceOnRandomTimelines) {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    // Mostly 1-s steps, plus other fine resolutions.
    const std::size_t r = trial % 4 == 0 ? model::kResolutions[2 + rng.below(12)] : 30;
    const std::size_t bins = r == 30 ? 30 + rng.below(270) : (2 + rng.below(6)) * r;
    const StageTimeline t = oracle::random_timeline(rng, r, bins);
    const auto got = derive_arousals(t);
    const auto want = oracle::arousal_bins(t);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    const double step = t.step_seconds();
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_DOUBLE_EQ(got[k].onset, want[k].first * step);
      EXPECT_DOUBLE_EQ(got[k].end(), want[k].second * step);
    }
    // Invariants: disjoint, 3-15 s, boundaries on Wake-run edges.
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_GE(got[k].duration, 3.0 - 1e-9);
      EXPECT_LE(got[k].duration, 15.0 + 1e-9);
      if (k > 0) {
        EXPECT_LE(got[k - 1].end(), got[k].onset);
      }
      const auto b = static_cast<std::size_t>(std::llround(got[k].onset / step));
      const auto e = static_cast<std::size_t>(std::llround(got[k].end() / step));
      EXPECT_EQ(t.stages[b], Stage::Wake);
      EXPECT_EQ(t.stages[e - 1], Stage::Wake);
      EXPECT_TRUE(b == 0 || t.stages[b - 1] != Stage::Wake);
      EXPECT_TRUE(e == t.stages.size() || t.stages[e] != Stage::Wake);
    }
  }
}

TEST(IouMatch, HandExamples) {
  const std::vector<EventInterval> c{ev(0, 10)}, a{ev(5, 10)};
  EXPECT_NEAR(overlap_ratio(c[0], a[0]), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(overlap_ratio(c[0], a[0], Overlap::SummedLength), 0.25, 1e-15);
  const EventMatch m = iou_match(c, a);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_TRUE(m.false_positives.empty());
  EXPECT_TRUE(m.false_negatives.empty());

  const std::vector<EventInterval> far{ev(50, 5)};
  const EventMatch d = iou_match(c, far);
  EXPECT_TRUE(d.pairs.empty());
  EXPECT_EQ(d.false_positives, std::vector<std::size_t>{0});
  EXPECT_EQ(d.false_negatives, std::vector<std::size_t>{0});

  const EventMatch same = iou_match(c, c);
  ASSERT_EQ(same.pairs.size(), 1u);
  EXPECT_DOUBLE_EQ(same.pairs[0].overlap, 1.0);

  // Threshold sits exactly at 0.2: [0,10) vs [8,18) has IoU 2/18 < 0.2,
  // [0,10) vs [6,16) has 4/16 = 0.25.
  EXPECT_TRUE(iou_match(c, std::vector<EventInterval>{ev(8, 10)}).pairs.empty());
  EXPECT_EQ(iou_match(c, std::vector<EventInterval>{ev(6, 10)}).pairs.size(), 1u);
  // Summed-length reading is stricter: 4/20 = 0.2 still qualifies, 3/20 not.
  EXPECT_EQ(iou_match(c, std::vector<EventInterval>{ev(6, 10)}, 0.2, Overlap::SummedLength).pairs.size(), 1u);
  EXPECT_TRUE(iou_match(c, std::vector<EventInterval>{ev(7, 10)}, 0.2, Overlap::SummedLength).pairs.empty());
}

TEST(IouMatch, GreedyPrefersHigherOverlap) {
  // Candidate 0 overlaps both annotations; annotation 1 is its better match,
  // so annotation 0 goes to candidate 1.
  const std::vector<EventInterval> c{ev(10, 10), ev(0, 8)};
  const std::vector<EventInterval> a{ev(2, 10), ev(11, 9)};
  const EventMatch m = iou_match(c, a);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.pairs[0].candidate, 0u);
  EXPECT_EQ(m.pairs[0].annotation, 1u);
  EXPECT_EQ(m.pairs[1].candidate, 1u);
  EXPECT_EQ(m.pairs[1].annotation, 0u);
}

TEST(IouMatch, AgreesWithReferenceOnRandomInstances) {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EventInterval> c(rng.below(8)), a(rng.below(8));
    // Quarter-second grid keeps the interval arithmetic exact.
    for (auto& e : c) e = ev(static_cast<double>(rng.below(400)) / 4.0, static_cast<double>(4 + rng.below(60)) / 4.0);
    for (auto& e : a) e = ev(static_cast<double>(rng.below(400)) / 4.0, static_cast<double>(4 + rng.below(60)) / 4.0);
    const EventMatch m = iou_match(c, a);
    const auto want = oracle::greedy_iou_match(c, a, 0.2);
    std::set<std::pair<std::size_t, std::size_t>> got_set, want_set(want.begin(), want.end());
    for (const auto& p : m.pairs) got_set.insert({p.candidate, p.annotation});
    EXPECT_EQ(got_set, want_set) << "trial " << trial;
    EXPECT_LE(m.pairs.size(), std::min(c.size(), a.size()));
    EXPECT_EQ(m.pairs.size() + m.false_positives.size(), c.size());
    EXPECT_EQ(m.pairs.size() + m.false_negatives.size(), a.size());
    std::set<std::size_t> cs, as;
    for (const auto& p : m.pairs) {
      EXPECT_TRUE(cs.insert(p.candidate).second);
      EXPECT_TRUE(as.insert(p.annotation).second);
      EXPECT_GE(p.overlap, 0.2);
    }
  }
}

TEST(IouPrf, HandExamples) {
  const DetectionScores all = iou_prf(4, 0, 0);
  EXPECT_DOUBLE_EQ(all.precision, 1.0);
  EXPECT_DOUBLE_EQ(all.recall, 1.0);
  EXPECT_DOUBLE_EQ(all.f1, 1.0);
  EXPECT_FALSE(all.undefined);
  const DetectionScores s = iou_prf(1, 1, 3);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 0.25);
  EXPECT_NEAR(s.f1, 1.0 / 3.0, 1e-15);
  const DetectionScores none = iou_prf(0, 0, 0);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_TRUE(none.undefined);
}

TEST(Triplets, IndexIsLexicographicBijection) {
  const auto triples = oracle::all_triplets();
  ASSERT_EQ(triples.size(), kTripletCount);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    EXPECT_EQ(triplet_index(triples[i][0], triples[i][1], triples[i][2]), i);
    EXPECT_EQ(triplet_from_index(i), triples[i]);
  }
  EXPECT_THROW(triplet_index(Stage::N2, Stage::N2, Stage::N1), ConfigError);
  EXPECT_THROW(triplet_index(Stage::N2, Stage::Excluded, Stage::N1), ConfigError);
  EXPECT_THROW(triplet_from_index(80), ConfigError);
}

TEST(Triplets, HandExamples) {
  // One block of 180 sleep epochs at resolution 1.
  std::vector<Stage> trim(180, Stage::N2);
  StageTimeline constant = repeated(1, Stage::N2, 180);
  TripletResult r = triplet_features(constant, trim);
  ASSERT_EQ(r.blocks.size(), 1u);
  EXPECT_FALSE(r.too_short);
  for (auto c : r.blocks[0].counts) EXPECT_EQ(c, 0u);

  StageTimeline t = repeated(1, Stage::N2, 180);
  t.stages[0] = Stage::Wake;
  t.stages[1] = Stage::N1;
  t.stages[2] = Stage::Wake;
  t.stages[3] = Stage::N1;
  t.stages[4] = Stage::N1;
  r = triplet_features(t, trim);
  const auto& counts = r.blocks[0].counts;
  EXPECT_EQ(counts[triplet_index(Stage::Wake, Stage::N1, Stage::Wake)], 1u);
  EXPECT_EQ(counts[triplet_index(Stage::N1, Stage::Wake, Stage::N1)], 1u);
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  EXPECT_EQ(sum, 2u);
}

TEST(Triplets, TrimmingAndBlocks) {
  // 20 Wake epochs, 400 sleep epochs, 30 Wake epochs: two full blocks, the
  // 40-epoch remainder dropped.
  std::vector<Stage> trim(450, Stage::N2);
  for (std::size_t i = 0; i < 20; ++i) trim[i] = Stage::Wake;
  for (std::size_t i = 420; i < 450; ++i) trim[i] = Stage::Wake;
  const std::size_t r = 2;
  StageTimeline t = repeated(r, Stage::N2, 450 * r);
  // Transitions before the trimmed span do not count.
  t.stages[0] = Stage::Wake, t.stages[2] = Stage::Wake;
  t.stages[1] = Stage::N1;
  // One W-N1-N2 inside block 1 (bins 20*2 + 180*2 ... ).
  const std::size_t b1 = (20 + 180) * r + 10;
  t.stages[b1] = Stage::Wake;
  t.stages[b1 + 1] = Stage::N1;
  const TripletResult res = triplet_features(t, trim);
  ASSERT_EQ(res.blocks.size(), 2u);
  EXPECT_EQ(res.blocks[1].block_index, 1u);
  std::uint64_t s0 = 0, s1 = 0;
  for (auto c : res.blocks[0].counts) s0 += c;
  for (auto c : res.blocks[1].counts) s1 += c;
  EXPECT_EQ(s0, 0u);
  // N2-W-N1 and W-N1-N2.
  EXPECT_EQ(s1, 2u);
  EXPECT_EQ(res.blocks[1].counts[triplet_index(Stage::N2, Stage::Wake, Stage::N1)], 1u);

  const TripletResult short_res = triplet_features(repeated(1, Stage::N2, 100), std::vector<Stage>(100, Stage::N2));
  EXPECT_TRUE(short_res.too_short);
  EXPECT_TRUE(short_res.blocks.empty());
  EXPECT_TRUE(triplet_features(repeated(1, Stage::Wake, 200), std::vector<Stage>(200, Stage::Wake)).too_short);
  EXPECT_THROW(triplet_features(repeated(2, Stage::N2, 10), std::vector<Stage>(4, Stage::N2)), DimensionError);
}

TEST(Triplets, AgreeWithTripleLoopOnRandomSequences) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = trial % 2 ? 1 : model::kResolutions[rng.below(6)];
    const std::size_t epochs = 180 + rng.below(400);
    std::vector<Stage> trim(epochs);
    for (Stage& s : trim) s = rng.uniform() < 0.2 ? Stage::Wake : kScoredStages[1 + rng.below(4)];
    StageTimeline t{r, std::vector<Stage>(epochs * r)};
    for (Stage& s : t.stages) s = kScoredStages[rng.below(5)];
    const TripletResult res = triplet_features(t, trim);
    const auto want = oracle::triplet_blocks(t, trim);
    ASSERT_EQ(res.blocks.size(), want.size());
    for (std::size_t b = 0; b < want.size(); ++b) {
      EXPECT_EQ(res.blocks[b].counts.size(), 80u);
      EXPECT_EQ(std::vector<std::uint64_t>(res.blocks[b].counts.begin(), res.blocks[b].counts.end()), want[b]);
    }
  }
}

TEST(Triplets, Csv) {
  TripletResult r;
  r.blocks.push_back({0, {}});
  r.blocks[0].counts[3] = 7;
  const std::string csv = triplet_csv("rec-1", 16, r);
  const auto nl = csv.find('\n');
  const std::string header = csv.substr(0, nl);
  EXPECT_EQ(header.substr(0, 40), "recording_id,block_index,resolution,c0,c");
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 82);
  EXPECT_EQ(header.substr(header.size() - 4), ",c79");
  EXPECT_EQ(csv.substr(nl + 1, 20), "rec-1,0,16,0,0,0,7,0");
  EXPECT_EQ(triplet_csv("x", 1, r, false).substr(0, 6), "x,0,1,");
}
