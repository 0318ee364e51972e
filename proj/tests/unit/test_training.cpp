#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"
#include "anysleep/model/checkpoint.hpp"
#include "anysleep/training/trainer.hpp"

using namespace anysleep;
using namespace anysleep::train;
namespace fs = std::filesystem;

namespace {

io::LoadedRecording synth_loaded(std::uint64_t seed, const std::string& dataset, std::size_t eeg, std::size_t eog,
                                 std::size_t epochs, double artifacts = 0.0) {
  io::SynthParams p;
  p.eeg_channels = eeg;
  p.eog_channels = eog;
  p.epochs = epochs;
  p.artifact_probability = artifacts;
  const io::SynthRecording s = io::synth_generate(seed, p);
  io::LoadedRecording r;
  r.entry.dataset = dataset;
  r.entry.id = dataset + "-" + std::to_string(seed);
  r.prepared = io::prepare_recording(s.recording, s.hypnogram);
  r.events = s.arousals;
  return r;
}

std::vector<io::LoadedRecording> small_corpus(std::uint64_t seed, std::size_t n, std::size_t epochs = 8) {
  std::vector<io::LoadedRecording> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(synth_loaded(seed * 100 + i, i % 2 ? "b" : "a", 1 + i % 2, 1, epochs));
    // The sampler needs every stage somewhere in the corpus.
    for (std::size_t k = 0; k < kNumStages && k < epochs; ++k) out.back().prepared.labels[k] = kScoredStages[k];
  }
  return out;
}

model::ModelConfig tiny_config() { return model::ModelConfig::make(2, 4, model::Fusion::Mid, 4, 5); }

TrainConfig quick_train(std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = 2;
  c.updates_per_epoch = 2;
  c.max_epochs = 3;
  c.patience = 3;
  c.lr = 1e-3;
  c.seed = seed;
  return c;
}

sampling::SamplingConfig quick_sampling() {
  sampling::SamplingConfig s;
  s.sequence_epochs = 2;
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("anysleep_train_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool same_params(const model::Model& a, const model::Model& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const auto& x = a.params.value(i);
    const auto& y = b.params.value(i);
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] != y[k]) return false;
    }
  }
  return true;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patience = c.max_epochs + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c = quick_train(9);
  c.validation_policy = eval::AbsentPolicy::Exclude;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", "eight"}}), ConfigError);
}

TEST(Training, LossTargetsMaskExcluded) {
  const std::vector<Stage> labels{Stage::Wake, Stage::Excluded, Stage::REM};
  const auto t = loss_targets(labels);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(*t[0], 0u);
  EXPECT_FALSE(t[1].has_value());
  EXPECT_EQ(*t[2], 4u);
}

TEST(Training, ExcludedTargetsDoNotEnterTheLoss) {
  Rng rng(5);
  model::Model m = model::Model::initialize(tiny_config(), 3);
  Batch batch;
  for (int s = 0; s < 2; ++s) {
    nk::Array x({2, 3 * kSamplesPerEpoch});
    for (double& v : x.values()) v = rng.normal();
    batch.inputs.push_back(x);
    batch.targets.push_back({std::nullopt, std::size_t{2}, std::nullopt});
  }
  const nk::Binding frozen = nk::Binding::frozen(m.params);
  model::PassOptions opt;
  opt.mode = nk::NormMode::Train;
  const double base = batch_loss(m, frozen, batch, opt).value().item();
  // Oracle: mean over samples of the mean negative log-probability of the
  // unmasked rows only.
  const auto outs = model::forward_batch(m, frozen, batch.inputs, 1, opt);
  double expected = 0.0;
  for (std::size_t s = 0; s < outs.size(); ++s) expected += -std::log(outs[s].probabilities.value().at(1, 2));
  expected /= static_cast<double>(outs.size());
  EXPECT_NEAR(base, expected, 1e-12);
  // Excluded labels of a recording become masked targets.
  std::vector<io::LoadedRecording> recs{synth_loaded(4, "a", 1, 1, 6)};
  recs[0].prepared.labels[1] = Stage::Excluded;
  const TrainingCorpus corpus(recs);
  const std::vector<sampling::BatchSample> samples{{0, 0, {0, 1}, 0, 3, 1, Stage::N2}};
  const Batch b = assemble_batch(corpus, samples);
  EXPECT_FALSE(b.targets[0][1].has_value());
  const double with_mask = batch_loss(m, frozen, b, opt).value().item();
  Batch relabeled = b;
  relabeled.targets[0][1] = std::size_t{4};
  EXPECT_NE(batch_loss(m, frozen, relabeled, opt).value().item(), with_mask);
}

TEST(Training, AssembleBatchCopiesWindows) {
  std::vector<io::LoadedRecording> recs{synth_loaded(8, "a", 2, 1, 6)};
  const TrainingCorpus corpus(recs);
  const std::vector<sampling::BatchSample> samples{{0, 0, {2, 0}, 2, 3, 3, Stage::N2}};
  const Batch b = assemble_batch(corpus, samples);
  ASSERT_EQ(b.inputs.size(), 1u);
  ASSERT_EQ(b.inputs[0].dim(0), 2u);
  ASSERT_EQ(b.inputs[0].dim(1), 3 * kSamplesPerEpoch);
  const auto& sig = recs[0].prepared.signals;
  EXPECT_EQ(b.inputs[0].at(0, 0), sig.at(2, 2 * kSamplesPerEpoch));
  EXPECT_EQ(b.inputs[0].at(1, 100), sig.at(0, 2 * kSamplesPerEpoch + 100));
  ASSERT_EQ(b.targets[0].size(), 3u);
  EXPECT_EQ(*b.targets[0][0], stage_index(recs[0].prepared.labels[2]));
}

TEST(Training, OneStepDecreasesItsOwnBatchLoss) {
  // Desk architecture, lr 1e-5, one update per trial on short windows.
  const auto corpus_recs = small_corpus(3, 4, 5);
  const TrainingCorpus corpus(corpus_recs);
  sampling::SamplingConfig sc;
  sc.sequence_epochs = 1;
  sampling::Sampler sampler(corpus.index(), sc, 77);
  nk::AmsGradConfig oc;
  oc.lr = 1e-5;
  int decreased = 0;
  const int trials = 100;
  model::Model base = model::Model::initialize(model::ModelConfig::desk(), 1);
  for (int t = 0; t < trials; ++t) {
    model::Model m = base;
    const Batch batch = assemble_batch(corpus, sampler.draw_batch(2));
    nk::AmsGrad opt(oc);
    const double before = train_step(m, opt, batch);
    model::Model probe = m;
    model::PassOptions po;
    po.mode = nk::NormMode::Train;
    const double after = batch_loss(probe, nk::Binding::frozen(probe.params), batch, po).value().item();
    if (after < before) ++decreased;
  }
  EXPECT_GE(decreased, 95);
}

TEST(Training, NonFiniteLossLeavesModelUntouched) {
  model::Model m = model::Model::initialize(tiny_config(), 2);
  const model::Model before = m;
  Batch batch;
  nk::Array x({1, kSamplesPerEpoch});
  x.values()[10] = std::numeric_limits<double>::quiet_NaN();
  batch.inputs.push_back(x);
  batch.targets.push_back({std::size_t{0}});
  nk::AmsGrad opt(nk::AmsGradConfig{});
  EXPECT_THROW(train_step(m, opt, batch), NumericError);
  EXPECT_TRUE(same_params(m, before));
  for (const auto& [name, stats] : before.norms) {
    const auto& now = m.norms.at(name);
    for (std::size_t k = 0; k < stats.running_mean.size(); ++k) {
      EXPECT_EQ(now.running_mean[k], stats.running_mean[k]);
      EXPECT_EQ(now.running_var[k], stats.running_var[k]);
    }
  }
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Training, ChunkedPredictionMatchesWholeRecording) {
  // Single channel: attention weights are exactly one, so only the
  // convolutional path matters and a context covering the receptive radius
  // reproduces the unchunked output.
  const model::ModelConfig cfg = model::ModelConfig::desk();
  model::Model m = model::Model::initialize(cfg, 12);
  Rng rng(3);
  for (auto& [name, stats] : m.norms) {
    for (double& v : stats.running_mean.values()) v = 0.1 * rng.normal();
    for (double& v : stats.running_var.values()) v = 1.0 + 0.5 * rng.uniform();
  }
  const io::LoadedRecording rec = synth_loaded(21, "a", 1, 0, 10);
  const std::size_t context = (cfg.receptive_radius() + kSamplesPerEpoch - 1) / kSamplesPerEpoch;
  for (std::size_t r : {std::size_t{1}, std::size_t{16}}) {
    const nk::Array whole = predict_recording(m, rec.prepared.signals, r);
    const nk::Array chunked = predict_recording(m, rec.prepared.signals, r, 3, context);
    ASSERT_EQ(whole.shape(), chunked.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < whole.size(); ++i) worst = std::max(worst, std::abs(whole[i] - chunked[i]));
    EXPECT_LT(worst, 1e-9) << "resolution " << r;
  }
}

TEST(Training, ChunkedPredictionChecksArguments) {
  const model::Model m = model::Model::initialize(model::ModelConfig::make(2, 4, model::Fusion::Mid, 4, 5), 1);
  EXPECT_THROW(predict_recording(m, nk::Array({1, 1000}), 1), DimensionError);
}

TEST(Validate, OracleModelScoresOne) {
  model::Model m = model::Model::initialize(tiny_config(), 4);
  auto& w = m.params.at("cls.out.conv.w");
  for (double& v : w.values()) v = 0.0;
  auto& b = m.params.at("cls.out.conv.b");
  for (std::size_t k = 0; k < 5; ++k) b[k] = k == stage_index(Stage::N2) ? 50.0 : 0.0;
  std::vector<io::LoadedRecording> recs{synth_loaded(6, "a", 1, 1, 4)};
  for (Stage& s : recs[0].prepared.labels) s = Stage::N2;
  EXPECT_DOUBLE_EQ(validate(m, recs, eval::AbsentPolicy::Exclude), 1.0);
  // Under the zero policy the four absent stages each contribute 0.
  EXPECT_DOUBLE_EQ(validate(m, recs, eval::AbsentPolicy::Zero), 0.2);
}

TEST(Validate, UntrainedModelIsNoBetterThanChance) {
  std::vector<io::LoadedRecording> recs;
  for (std::uint64_t s = 0; s < 4; ++s) recs.push_back(synth_loaded(300 + s, "a", 2, 1, 40));
  double total = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const model::Model m = model::Model::initialize(model::ModelConfig::desk(), 1000 + s);
    total += validate(m, recs);
  }
  EXPECT_LT(total / seeds, 0.3);
  // Uniform random predictions on the same labels score 0.2 +- 0.1.
  Rng rng(17);
  double chance = 0.0;
  const int draws = 200;
  for (int d = 0; d < draws; ++d) {
    std::vector<eval::RecordingResult> results;
    for (const auto& r : recs) {
      std::vector<Stage> guess(r.prepared.labels.size());
      for (Stage& g : guess) g = kScoredStages[rng.below(kNumStages)];
      results.push_back({r.entry.dataset, r.entry.id, eval::confusion(guess, r.prepared.labels)});
    }
    chance += eval::mean_dataset_mf1(results, eval::AbsentPolicy::Zero);
  }
  chance /= draws;
  EXPECT_GT(chance, 0.1);
  EXPECT_LT(chance, 0.3);
}

TEST(Validate, Errors) {
  const model::Model m = model::Model::initialize(tiny_config(), 4);
  EXPECT_THROW(validate(m, std::vector<io::LoadedRecording>{}), EvaluationError);
  std::vector<io::LoadedRecording> recs{synth_loaded(6, "a", 1, 1, 4)};
  for (Stage& s : recs[0].prepared.labels) s = Stage::Excluded;
  EXPECT_THROW(validate(m, recs), EvaluationError);
  const auto train_set = small_corpus(1, 2);
  EXPECT_THROW(train::train(tiny_config(), train_set, recs, quick_train(1), quick_sampling()), EvaluationError);
  EXPECT_THROW(train::train(tiny_config(), train_set, {}, quick_train(1), quick_sampling()), EvaluationError);
  EXPECT_THROW(train::train(tiny_config(), {}, train_set, quick_train(1), quick_sampling()), ConfigError);
}

TEST(RunLog, CsvAndJson) {
  RunLog log;
  log.epochs.push_back({1, 1.5, 0.25, 3.0, true});
  log.epochs.push_back({2, 1.25, 0.2, 2.5, false});
  log.best_epoch = 1;
  EXPECT_EQ(log.to_csv(), "epoch,train_loss,valid_mf1,best_epoch\n1,1.5,0.25,1\n2,1.25,0.20000000000000001,1\n");
  EXPECT_EQ(log.timing_csv(), "epoch,wall_seconds\n1,3\n2,2.5\n");
  const RunLog back = RunLog::from_json(log.to_json());
  EXPECT_EQ(back.to_csv(), log.to_csv());
  EXPECT_EQ(back.best_epoch, 1u);
}

TEST(Train, PatienceOneStopsAfterTwoEpochsWithFirstWeights) {
  const auto data = small_corpus(2, 2);
  TrainConfig tc = quick_train(3);
  tc.patience = 1;
  tc.max_epochs = 10;
  std::vector<model::Model> snapshots;
  double score = 0.9;
  TrainOptions opt;
  opt.validator = [&](const model::Model&) { return score -= 0.1; };
  opt.on_epoch = [&](const EpochRecord&, const model::Model& m) { snapshots.push_back(m); };
  const TrainResult r = train::train(tiny_config(), data, {}, tc, quick_sampling(), opt);
  EXPECT_EQ(r.log.epochs.size(), 2u);
  EXPECT_EQ(r.log.best_epoch, 1u);
  EXPECT_EQ(r.stop_reason, "patience");
  ASSERT_EQ(snapshots.size(), 2u);
  EXPECT_TRUE(same_params(r.best, snapshots[0]));
  EXPECT_FALSE(same_params(r.best, snapshots[1]));
}

TEST(Train, BestCheckpointHasTheHighestLoggedScore) {
  const auto data = small_corpus(4, 2);
  TrainConfig tc = quick_train(5);
  tc.max_epochs = 6;
  tc.patience = 6;
  const std::vector<double> scores{0.3, 0.5, 0.4, 0.5, 0.7, 0.6};
  std::size_t call = 0;
  std::vector<model::Model> snapshots;
  TrainOptions opt;
  opt.validator = [&](const model::Model&) { return scores.at(call++); };
  opt.on_epoch = [&](const EpochRecord&, const model::Model& m) { snapshots.push_back(m); };
  const TrainResult r = train::train(tiny_config(), data, {}, tc, quick_sampling(), opt);
  ASSERT_EQ(r.log.epochs.size(), 6u);
  EXPECT_EQ(r.stop_reason, "max_epochs");
  EXPECT_EQ(r.log.best_epoch, 5u);
  for (const auto& e : r.log.epochs) EXPECT_GE(r.log.epochs[r.log.best_epoch - 1].valid_mf1, e.valid_mf1);
  EXPECT_TRUE(same_params(r.best, snapshots[4]));
  // A tie (epoch 4 equals epoch 2) is not an improvement.
  EXPECT_FALSE(r.log.epochs[3].improved);
}

TEST(Train, IdenticalSeedsGiveIdenticalRunLogs) {
  const auto train_set = small_corpus(7, 3);
  const auto valid_set = small_corpus(8, 2);
  TempDir a("det_a"), b("det_b");
  TrainOptions oa, ob;
  oa.out_dir = a.path;
  ob.out_dir = b.path;
  const TrainResult ra = train::train(tiny_config(), train_set, valid_set, quick_train(11), quick_sampling(), oa);
  const TrainResult rb = train::train(tiny_config(), train_set, valid_set, quick_train(11), quick_sampling(), ob);
  EXPECT_EQ(ra.log.to_csv(), rb.log.to_csv());
  EXPECT_EQ(slurp(a.path / "runlog.csv"), slurp(b.path / "runlog.csv"));
  EXPECT_EQ(slurp(a.path / "best.ckpt"), slurp(b.path / "best.ckpt"));
  EXPECT_TRUE(same_params(ra.best, rb.best));
  const TrainResult rc = train::train(tiny_config(), train_set, valid_set, quick_train(12), quick_sampling());
  EXPECT_NE(rc.log.to_csv(), ra.log.to_csv());
}

TEST(Train, ResumeContinuesTheSameRun) {
  const auto train_set = small_corpus(9, 3);
  const auto valid_set = small_corpus(10, 2);
  TrainConfig full = quick_train(21);
  full.max_epochs = 3;
  const TrainResult straight = train::train(tiny_config(), train_set, valid_set, full, quick_sampling());

  TempDir dir("resume");
  TrainOptions opt;
  opt.out_dir = dir.path;
  opt.config_hash = "abc";
  TrainConfig first = full;
  first.max_epochs = 2;
  first.patience = 2;
  train::train(tiny_config(), train_set, valid_set, first, quick_sampling(), opt);
  opt.resume = true;
  const TrainResult resumed = train::train(tiny_config(), train_set, valid_set, full, quick_sampling(), opt);
  EXPECT_EQ(resumed.log.to_csv(), straight.log.to_csv());
  EXPECT_TRUE(same_params(resumed.best, straight.best));

  opt.config_hash = "other";
  EXPECT_THROW(train::train(tiny_config(), train_set, valid_set, full, quick_sampling(), opt), ConfigError);
}

TEST(Train, PersistsBestCheckpointAndLogs) {
  const auto data = small_corpus(12, 2);
  TempDir dir("persist");
  TrainOptions opt;
  opt.out_dir = dir.path;
  opt.config_hash = "h";
  const TrainResult r = train::train(tiny_config(), data, data, quick_train(2), quick_sampling(), opt);
  ASSERT_TRUE(fs::exists(dir.path / "best.ckpt"));
  EXPECT_EQ(slurp(dir.path / "runlog.csv"), r.log.to_csv());
  EXPECT_EQ(slurp(dir.path / "timing.csv"), r.log.timing_csv());
  const model::Model loaded = model::load_model(dir.path / "best.ckpt");
  EXPECT_TRUE(same_params(loaded, r.best));
}

TEST(Train, NonFiniteLossAbortsWithLastGoodModel) {
  auto data = small_corpus(13, 2);
  TrainConfig tc = quick_train(4);
  tc.max_epochs = 5;
  tc.patience = 5;
  std::vector<model::Model> snapshots;
  TrainOptions opt;
  double score = 0.0;
  opt.validator = [&](const model::Model&) { return score += 0.1; };
  opt.on_epoch = [&](const EpochRecord&, const model::Model& m) {
    snapshots.push_back(m);
    // Corrupt the training signals after the first epoch.
    for (auto& r : data) {
      for (double& v : r.prepared.signals.values()) v = std::numeric_limits<double>::quiet_NaN();
    }
  };
  const TrainResult r = train::train(tiny_config(), data, {}, tc, quick_sampling(), opt);
  EXPECT_TRUE(r.aborted);
  EXPECT_EQ(r.stop_reason, "non-finite loss");
  ASSERT_EQ(r.log.epochs.size(), 1u);
  EXPECT_TRUE(same_params(r.best, snapshots[0]));
}
