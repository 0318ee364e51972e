#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anysleep/core/errors.hpp"
#include "anysleep/costmodel/costmodel.hpp"
#include "anysleep/evaluation/metrics.hpp"
#include "anysleep/hifreq/hifreq.hpp"
#include "anysleep/model/checkpoint.hpp"
#include "anysleep/signal_io/corpus.hpp"
#include "anysleep/signal_io/edf.hpp"
#include "anysleep/signal_io/sidecar.hpp"
#include "anysleep/training/experiment.hpp"

namespace fs = std::filesystem;
using namespace anysleep;
using nlohmann::json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

std::size_t thread_bound() {
  const char* env = std::getenv("ANYSLEEP_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("ANYSLEEP_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(v);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ConfigError(what + " '" + path.string() + "' does not exist");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Resolved command configuration, written beside every output.
void write_resolved(const fs::path& out_dir, const std::string& command, json flags) {
  flags["command"] = command;
  flags["threads"] = thread_bound();
  write_json(out_dir / (command + ".config.json"), flags);
}

std::string format_prob(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

// Hypnogram sidecar at any supported resolution; returns the resolution.
std::size_t read_timeline(const fs::path& path, hifreq::StageTimeline& out) {
  require_file(path, "prediction file");
  const io::Hypnogram h = io::read_hypnogram_csv(path);
  const double r = kEpochSeconds / h.epoch_seconds;
  const auto res = static_cast<std::size_t>(std::llround(r));
  if (std::abs(r - static_cast<double>(res)) > 1e-6) {
    throw ConfigError("'" + path.string() + "': bin length " + io::format_seconds(h.epoch_seconds) +
                      " s is not 30 s divided by a supported resolution");
  }
  model::require_resolution(res);
  out.resolution = res;
  out.stages = h.labels;
  return res;
}

io::Hypnogram read_epochs(const fs::path& path, const std::string& what) {
  require_file(path, what);
  io::Hypnogram h = io::read_hypnogram_csv(path);
  if (std::abs(h.epoch_seconds - kEpochSeconds) > 1e-6) {
    throw ConfigError(what + " '" + path.string() + "' must use 30-s epochs");
  }
  return h;
}

// File name up to the first dot: "rec-001.r16.hyp.csv" -> "rec-001".
std::string recording_stem(const fs::path& path) {
  const std::string name = path.filename().string();
  return name.substr(0, name.find('.'));
}

// Channel indices of `recording` named in `filter`, in filter order.
std::vector<std::size_t> select_channels(const io::Recording& recording, const std::vector<std::string>& filter) {
  std::vector<std::size_t> pick;
  for (const std::string& name : filter) {
    std::size_t idx = recording.channels.size();
    for (std::size_t c = 0; c < recording.channels.size(); ++c) {
      if (recording.channels[c].name == name) idx = c;
    }
    if (idx == recording.channels.size()) {
      throw ConfigError("channel '" + name + "' not found in '" + recording.id + "'");
    }
    pick.push_back(idx);
  }
  return pick;
}

// Signals of an unlabeled recording, normalized exactly as in training.
io::PreparedRecording prepare_unlabeled(const io::Recording& recording, const std::vector<std::string>& channels) {
  double seconds = 0.0;
  for (const io::Channel& c : recording.channels) {
    seconds = std::max(seconds, static_cast<double>(c.samples.size()) / c.rate_hz);
  }
  io::Hypnogram placeholder;
  placeholder.labels.assign(static_cast<std::size_t>(seconds / kEpochSeconds) + 1, Stage::Excluded);
  const auto pick = select_channels(recording, channels);
  return io::prepare_recording(recording, placeholder, pick);
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t recordings = 0;
  std::size_t epochs = 120;
  std::size_t valid = 1;
  std::size_t test = 1;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  io::CorpusSpec spec = io::CorpusSpec::desk();
  if (!a.config.empty()) {
    require_file(a.config, "config");
    std::ifstream is(a.config);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config '" + a.config + "' is not valid JSON: " + e.what());
    }
    spec = io::CorpusSpec::from_json(j);
  } else if (a.recordings > 0) {
    io::DatasetSpec ds;
    ds.name = "synth";
    ds.params.eeg_channels = 2;
    ds.params.eog_channels = 1;
    ds.params.epochs = a.epochs;
    ds.params.arousal_rate_per_hour = 20.0;
    ds.train = a.recordings;
    ds.valid = a.valid;
    ds.test = a.test;
    spec.datasets = {ds};
  }
  if (a.seed) spec.seed = *a.seed;
  const io::Corpus corpus = io::generate_corpus(spec, a.out);
  write_resolved(a.out, "synth", {{"spec", spec.to_json()}});
  std::fprintf(stderr, "wrote %zu recordings to %s\n", corpus.entries.size(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool resume = false;
};

int cmd_train(const TrainArgs& a) {
  require_file(a.config, "config");
  train::ExperimentConfig cfg = train::ExperimentConfig::load(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (!a.out.empty()) cfg.out = a.out;
  if (cfg.corpus.empty()) throw ConfigError("experiment: no corpus path given");
  if (cfg.out.empty()) throw ConfigError("experiment: no output directory given (--out)");
  if (!fs::exists(cfg.corpus)) throw ConfigError("corpus '" + cfg.corpus.string() + "' does not exist");
  const io::Corpus corpus = io::load_corpus(cfg.corpus);
  const auto train_set = io::load_entries(corpus.select(io::Split::Train));
  const auto valid_set = io::load_entries(corpus.select(io::Split::Valid));
  if (train_set.empty()) throw ConfigError("corpus has no training recordings");

  fs::create_directories(cfg.out);
  json resolved = cfg.to_json();
  resolved["hash"] = cfg.hash();
  write_resolved(cfg.out, "train", {{"experiment", resolved}});

  train::TrainOptions opt;
  opt.out_dir = cfg.out;
  opt.resume = a.resume;
  opt.config_hash = cfg.hash();
  opt.on_epoch = [](const train::EpochRecord& r, const model::Model&) {
    std::fprintf(stderr, "epoch %zu  loss %.4f  valid MF1 %.4f%s  (%.1f s)\n", r.epoch, r.train_loss, r.valid_mf1,
                 r.improved ? " *" : "", r.wall_seconds);
  };
  const train::TrainResult result = train::train(cfg.model, train_set, valid_set, cfg.train, cfg.sampling, opt);

  json summary = {{"stop_reason", result.stop_reason},
                  {"best_epoch", result.log.best_epoch},
                  {"epochs", result.log.epochs.size()},
                  {"aborted", result.aborted}};
  const auto test_set = io::load_entries(corpus.select(io::Split::Test));
  if (!test_set.empty()) {
    std::vector<eval::RecordingResult> results;
    for (const auto& r : test_set) {
      const auto pred = eval::argmax_stages(train::predict_recording(result.best, r.prepared.signals, 1));
      results.push_back({r.entry.dataset, r.entry.id, eval::confusion(pred, r.prepared.labels)});
    }
    eval::ReportOptions ro = cfg.evaluation;
    ro.seed = cfg.train.seed;
    write_json(cfg.out / "test_metrics.json", eval::metrics_report(results, ro));
    summary["test_mf1"] = eval::mean_dataset_mf1(results, eval::AbsentPolicy::Zero);
  }
  write_json(cfg.out / "summary.json", summary);
  std::fprintf(stderr, "stopped: %s, best epoch %zu\n", result.stop_reason.c_str(), result.log.best_epoch);
  return result.aborted ? kExitInternal : 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::size_t resolution = 1;
  std::string channels;
  std::string id;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  model::require_resolution(a.resolution);
  require_file(a.checkpoint, "checkpoint");
  require_file(a.input, "recording");
  const model::Model m = model::load_model(a.checkpoint);
  io::Recording rec = io::read_edf(a.input);
  const std::string id = a.id.empty() ? recording_stem(a.input) : a.id;
  rec.id = id;
  std::vector<std::string> names = split_list(a.channels);
  if (names.empty()) {
    for (const auto& c : rec.channels) names.push_back(c.name);
  }
  const io::PreparedRecording prep = prepare_unlabeled(rec, names);
  const nk::Array probs = train::predict_recording(m, prep.signals, a.resolution);

  const double step = kEpochSeconds / static_cast<double>(a.resolution);
  std::string csv = "bin,onset_sec,W,N1,N2,N3,R\n";
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    csv += std::to_string(i) + ',' + io::format_seconds(static_cast<double>(i) * step);
    for (double p : probs.row(i)) csv += ',' + format_prob(p);
    csv += '\n';
  }
  const fs::path out(a.out);
  const std::string tag = id + ".r" + std::to_string(a.resolution);
  write_file(out / (tag + ".probs.csv"), csv);
  io::Hypnogram h;
  h.epoch_seconds = step;
  h.labels = eval::argmax_stages(probs);
  io::write_hypnogram_csv(out / (tag + ".hyp.csv"), h);
  write_resolved(out, "predict",
                 {{"checkpoint", a.checkpoint},
                  {"input", a.input},
                  {"id", id},
                  {"resolution", a.resolution},
                  {"channels", names},
                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}});
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> pred;
  std::vector<std::string> truth;
  std::vector<std::string> datasets;
  std::string scope = "dataset";
  std::string absent;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (a.pred.size() != a.truth.size()) throw ConfigError("eval: --pred and --truth must be given the same number of times");
  if (!a.datasets.empty() && a.datasets.size() != a.pred.size()) {
    throw ConfigError("eval: give --dataset once per --pred or not at all");
  }
  eval::ReportOptions ro;
  ro.scope = eval::scope_from_name(a.scope);
  if (!a.absent.empty()) ro.recording_policy = ro.dataset_policy = eval::policy_from_name(a.absent);
  ro.seed = a.seed;
  std::vector<eval::RecordingResult> results;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    const io::Hypnogram p = read_epochs(a.pred[i], "prediction file");
    const io::Hypnogram t = read_epochs(a.truth[i], "truth file");
    if (p.labels.size() != t.labels.size()) {
      throw ConfigError("eval: '" + a.pred[i] + "' has " + std::to_string(p.labels.size()) + " epochs, '" + a.truth[i] +
                        "' has " + std::to_string(t.labels.size()));
    }
    results.push_back({a.datasets.empty() ? "default" : a.datasets[i], fs::path(a.truth[i]).stem().string(),
                       eval::confusion(p.labels, t.labels)});
  }
  if (results.empty()) throw ConfigError("eval: no prediction/truth pairs given");
  const json report = eval::metrics_report(results, ro);
  write_json(fs::path(a.out) / "metrics.json", report);
  write_resolved(a.out, "eval",
                 {{"pred", a.pred},
                  {"truth", a.truth},
                  {"datasets", a.datasets},
                  {"scope", a.scope},
                  {"absent_stage", a.absent.empty() ? json(nullptr) : json(a.absent)},
                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}});
  std::printf("%.6f\n", report.at("summary_mf1").get<double>());
  return 0;
}

// ---------------------------------------------------------------- arousals

struct ArousalArgs {
  std::string pred;
  std::string events;
  double threshold = 0.2;
  std::string overlap = "union";
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_arousals(const ArousalArgs& a) {
  hifreq::StageTimeline t;
  const std::size_t r = read_timeline(a.pred, t);
  if (a.overlap != "union" && a.overlap != "summed") throw ConfigError("--overlap must be union or summed");
  const auto measure = a.overlap == "union" ? hifreq::Overlap::Union : hifreq::Overlap::SummedLength;
  const auto candidates = hifreq::derive_arousals(t);
  const fs::path out(a.out);
  fs::create_directories(out);
  io::write_events_csv(out / "candidates.events.csv", candidates);
  if (!a.events.empty()) {
    require_file(a.events, "events file");
    const auto truth = io::read_events_csv(a.events);
    const auto match = hifreq::iou_match(candidates, truth, a.threshold, measure);
    const auto prf = hifreq::iou_prf(match);
    json pairs = json::array();
    for (const auto& p : match.pairs) pairs.push_back({{"candidate", p.candidate}, {"annotation", p.annotation}, {"overlap", p.overlap}});
    json report = {{"resolution", r},
                   {"candidates", candidates.size()},
                   {"annotations", truth.size()},
                   {"true_positives", match.pairs.size()},
                   {"false_positives", match.false_positives.size()},
                   {"false_negatives", match.false_negatives.size()},
                   {"precision", prf.precision},
                   {"recall", prf.recall},
                   {"f1", prf.f1},
                   {"undefined", prf.undefined},
                   {"pairs", pairs}};
    double total = 0.0;
    for (const auto& e : truth) total += e.duration;
    report["wake_overlap_fraction"] = total > 0.0 ? json(hifreq::wake_overlap_fraction(t, truth)) : json(nullptr);
    write_json(out / "arousal_metrics.json", report);
  }
  write_resolved(out, "arousals",
                 {{"pred", a.pred},
                  {"events", a.events},
                  {"threshold", a.threshold},
                  {"overlap", a.overlap},
                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}});
  return 0;
}

// ---------------------------------------------------------------- triplets

struct TripletArgs {
  std::string pred;
  std::string trim;
  std::string id;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_triplets(const TripletArgs& a) {
  hifreq::StageTimeline t;
  const std::size_t r = read_timeline(a.pred, t);
  std::vector<Stage> trim;
  if (!a.trim.empty()) {
    trim = read_epochs(a.trim, "trim hypnogram").labels;
  } else if (r == 1) {
    trim = t.stages;
  } else {
    throw ConfigError("triplets: --trim is required for predictions finer than 30 s");
  }
  const std::string id = a.id.empty() ? recording_stem(a.pred) : a.id;
  const hifreq::TripletResult res = hifreq::triplet_features(t, trim);
  if (res.too_short) std::fprintf(stderr, "warning: trimmed recording is shorter than one 1.5-h block\n");
  write_file(fs::path(a.out) / "triplets.csv", hifreq::triplet_csv(id, r, res));
  write_resolved(a.out, "triplets",
                 {{"pred", a.pred},
                  {"trim", a.trim},
                  {"id", id},
                  {"resolution", r},
                  {"too_short", res.too_short},
                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}});
  return 0;
}

// ---------------------------------------------------------------- cost

struct CostArgs {
  std::uint64_t max_channels = 6;
  std::uint64_t depth = 12;
  std::string early = "per-head";
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_cost(const CostArgs& a) {
  cost::CostOptions o;
  if (a.early == "shared") {
    o.early_encoders = cost::EarlyEncoderCount::Shared;
  } else if (a.early != "per-head") {
    throw ConfigError("--early-encoders must be per-head or shared");
  }
  write_file(fs::path(a.out) / "cost.csv", cost::scaling_csv(cost::scaling_table(a.max_channels, a.depth, o)));
  write_resolved(a.out, "cost",
                 {{"max_channels", a.max_channels},
                  {"depth", a.depth},
                  {"early_encoders", a.early},
                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}});
  return 0;
}

// ---------------------------------------------------------------- attn-trace

struct TraceArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string channels;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_attn_trace(const TraceArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  const model::Model m = model::load_model(a.checkpoint);
  if (m.config.fusion != model::Fusion::Mid) throw ConfigError("attn-trace needs a mid-fusion checkpoint");
  std::vector<model::NamedRecording> recs;
  const std::vector<std::string> filter = split_list(a.channels);
  for (const std::string& path : a.inputs) {
    require_file(path, "recording");
    io::Recording rec = io::read_edf(path);
    rec.id = fs::path(path).stem().string();
    std::vector<std::string> names = filter;
    if (names.empty()) {
      for (const auto& c : rec.channels) names.push_back(c.name);
    }
    const io::PreparedRecording prep = prepare_unlabeled(rec, names);
    recs.push_back({prep.channel_names, prep.signals});
  }
  if (recs.empty()) throw ConfigError("attn-trace: no recordings given");
  const model::AttentionTrace trace = model::extract_attention_trace(m, recs);
  std::string csv = "module,channel,weight\n";
  for (std::size_t mod = 0; mod < trace.weights.size(); ++mod) {
    for (std::size_t c = 0; c < trace.channels.size(); ++c) {
      csv += std::to_string(mod) + ',' + trace.channels[c] + ',' + format_prob(trace.weights[mod][c]) + '\n';
    }
  }
  write_file(fs::path(a.out) / "attention.csv", csv);
  write_resolved(a.out, "attn-trace",
                 {{"checkpoint", a.checkpoint},
                  {"inputs", a.inputs},
                  {"channels", filter},
                  {"recordings", trace.recordings},
                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}});
  return 0;
}

bool is_usage_error(const Error& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
         dynamic_cast<const MappingError*>(&e) || dynamic_cast<const AlignmentError*>(&e) ||
         dynamic_cast<const RangeError*>(&e) || dynamic_cast<const ResampleError*>(&e) ||
         dynamic_cast<const EvaluationError*>(&e) || dynamic_cast<const TraceError*>(&e) ||
         dynamic_cast<const SamplingError*>(&e);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-agnostic sleep staging: synthetic data, training, prediction and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "anysleep 1.0");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic corpus (EDF + sidecars + manifest)");
  s->add_option("--config", synth.config, "Corpus spec JSON (default: the desk corpus)");
  s->add_option("--seed", synth.seed, "Corpus seed (overrides the spec)");
  s->add_option("--recordings", synth.recordings, "Single-dataset corpus with this many recordings (no --config)");
  s->add_option("--epochs", synth.epochs, "Epochs per recording with --recordings")->capture_default_str();
  s->add_option("--valid", synth.valid, "Validation recordings with --recordings")->capture_default_str();
  s->add_option("--test", synth.test, "Test recordings with --recordings")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a corpus");
  t->add_option("--config", tr.config, "Experiment config JSON")->required();
  t->add_option("--seed", tr.seed, "Training seed (overrides the config)");
  t->add_option("--out", tr.out, "Output directory (overrides the config)");
  t->add_flag("--resume", tr.resume, "Continue from <out>/state.ckpt");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Stage probabilities and hypnogram for one recording");
  p->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->required();
  p->add_option("--input", pr.input, "EDF recording")->required();
  p->add_option("--resolution", pr.resolution, "Predictions per 30-s epoch")->capture_default_str();
  p->add_option("--channels", pr.channels, "Comma-separated channel names (default: all)");
  p->add_option("--id", pr.id, "Recording id used in output names (default: file stem)");
  p->add_option("--seed", pr.seed, "Recorded for provenance");
  p->add_option("--out", pr.out, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Macro F1 of predicted hypnograms against references");
  e->add_option("--pred", ev.pred, "Predicted 30-s hypnogram CSV (repeatable)")->required();
  e->add_option("--truth", ev.truth, "Reference hypnogram CSV, paired with --pred (repeatable)")->required();
  e->add_option("--dataset", ev.datasets, "Dataset of each pair (repeatable)");
  e->add_option("--scope", ev.scope, "recording or dataset")->capture_default_str();
  e->add_option("--absent-stage", ev.absent, "exclude or zero (default: exclude per recording, zero per dataset)");
  e->add_option("--seed", ev.seed, "Recorded in the report");
  e->add_option("--out", ev.out, "Output directory")->required();

  ArousalArgs ar;
  auto* a = app.add_subcommand("arousals", "Candidate arousals from high-resolution predictions");
  a->add_option("--pred", ar.pred, "Predicted hypnogram CSV at any resolution")->required();
  a->add_option("--events", ar.events, "Reference events CSV for IoU scoring");
  a->add_option("--threshold", ar.threshold, "Minimum overlap for a match")->capture_default_str();
  a->add_option("--overlap", ar.overlap, "union (IoU) or summed (intersection over summed length)")
      ->capture_default_str();
  a->add_option("--seed", ar.seed, "Recorded for provenance");
  a->add_option("--out", ar.out, "Output directory")->required();

  TripletArgs tp;
  auto* x = app.add_subcommand("triplets", "Stage-triplet counts per 1.5-h block");
  x->add_option("--pred", tp.pred, "Predicted hypnogram CSV at any resolution")->required();
  x->add_option("--trim", tp.trim, "30-s hypnogram used to trim leading and trailing Wake");
  x->add_option("--id", tp.id, "Recording id in the CSV (default: file stem)");
  x->add_option("--seed", tp.seed, "Recorded for provenance");
  x->add_option("--out", tp.out, "Output directory")->required();

  CostArgs co;
  auto* c = app.add_subcommand("cost", "Component-evaluation counts per architecture");
  c->add_option("--max-channels", co.max_channels, "Largest EEG channel count")->capture_default_str();
  c->add_option("--depth", co.depth, "Encoder depth")->capture_default_str();
  c->add_option("--early-encoders", co.early, "per-head or shared")->capture_default_str();
  c->add_option("--seed", co.seed, "Recorded for provenance");
  c->add_option("--out", co.out, "Output directory")->required();

  TraceArgs at;
  auto* w = app.add_subcommand("attn-trace", "Mean attention weight per module and channel");
  w->add_option("--checkpoint", at.checkpoint, "Mid-fusion model checkpoint")->required();
  w->add_option("--input", at.inputs, "EDF recording (repeatable)")->required();
  w->add_option("--channels", at.channels, "Comma-separated channel names (default: all)");
  w->add_option("--seed", at.seed, "Recorded for provenance");
  w->add_option("--out", at.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    thread_bound();
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(tr);
    if (p->parsed()) return cmd_predict(pr);
    if (e->parsed()) return cmd_eval(ev);
    if (a->parsed()) return cmd_arousals(ar);
    if (x->parsed()) return cmd_triplets(tp);
    if (c->parsed()) return cmd_cost(co);
    if (w->parsed()) return cmd_attn_trace(at);
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return is_usage_error(err) ? kExitUsage : kExitInternal;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return kExitInternal;
  }
  return kExitInternal;
}
