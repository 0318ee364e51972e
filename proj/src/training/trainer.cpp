#include "anysleep/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "anysleep/core/errors.hpp"
#include "anysleep/model/checkpoint.hpp"

namespace anysleep::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size == 0 || updates_per_epoch == 0 || max_epochs == 0 || patience == 0) {
    throw ConfigError("train: batch size, updates per epoch, max epochs and patience must be positive");
  }
  if (patience > max_epochs) throw ConfigError("train: patience exceeds max epochs");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: learning rate must be positive");
  if (!(min_improvement >= 0.0)) throw ConfigError("train: min_improvement must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"updates_per_epoch", updates_per_epoch},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"lr", lr},
          {"seed", seed},
          {"min_improvement", min_improvement},
          {"validation_policy", eval::policy_name(validation_policy)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.updates_per_epoch = j.value("updates_per_epoch", c.updates_per_epoch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.min_improvement = j.value("min_improvement", c.min_improvement);
    if (j.contains("validation_policy")) c.validation_policy = eval::policy_from_name(j.at("validation_policy").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainingCorpus::TrainingCorpus(std::span<const io::LoadedRecording> recordings) {
  for (const io::LoadedRecording& r : recordings) {
    auto it = std::find(names_.begin(), names_.end(), r.entry.dataset);
    if (it == names_.end()) {
      names_.push_back(r.entry.dataset);
      groups_.emplace_back();
      it = names_.end() - 1;
    }
    groups_[static_cast<std::size_t>(it - names_.begin())].push_back(&r.prepared);
  }
}

std::vector<sampling::DatasetIndex> TrainingCorpus::index() const {
  std::vector<sampling::DatasetIndex> out;
  for (std::size_t d = 0; d < groups_.size(); ++d) {
    sampling::DatasetIndex di{names_[d], {}};
    for (const io::PreparedRecording* r : groups_[d]) di.recordings.push_back({r->labels, r->signals.dim(0)});
    out.push_back(std::move(di));
  }
  return out;
}

const io::PreparedRecording& TrainingCorpus::recording(std::size_t dataset, std::size_t index) const {
  return *groups_.at(dataset).at(index);
}

std::vector<std::optional<std::size_t>> loss_targets(std::span<const Stage> labels) {
  std::vector<std::optional<std::size_t>> out;
  out.reserve(labels.size());
  for (Stage s : labels) out.push_back(is_scored(s) ? std::optional<std::size_t>(stage_index(s)) : std::nullopt);
  return out;
}

Batch assemble_batch(const TrainingCorpus& corpus, std::span<const sampling::BatchSample> samples) {
  Batch batch;
  for (const sampling::BatchSample& s : samples) {
    const io::PreparedRecording& rec = corpus.recording(s.dataset, s.recording);
    const std::size_t t = s.length * kSamplesPerEpoch, first = s.start * kSamplesPerEpoch;
    nk::Array x({s.channels.size(), t});
    for (std::size_t k = 0; k < s.channels.size(); ++k) {
      const auto row = rec.signals.row(s.channels[k]).subspan(first, t);
      std::copy(row.begin(), row.end(), x.row(k).begin());
    }
    batch.inputs.push_back(std::move(x));
    batch.targets.push_back(loss_targets(std::span<const Stage>(rec.labels).subspan(s.start, s.length)));
  }
  return batch;
}

nk::Var batch_loss(model::Model& model, const nk::Binding& params, const Batch& batch,
                   const model::PassOptions& options) {
  const auto outputs = model::forward_batch(model, params, batch.inputs, 1, options);
  std::vector<nk::Var> losses;
  losses.reserve(outputs.size());
  for (std::size_t s = 0; s < outputs.size(); ++s) {
    losses.push_back(nk::masked_cross_entropy(outputs[s].probabilities, batch.targets[s]));
  }
  return nk::scale(nk::add(losses), 1.0 / static_cast<double>(losses.size()));
}

double train_step(model::Model& model, nk::AmsGrad& optimizer, const Batch& batch) {
  const auto saved_norms = model.norms;
  const nk::Binding params = nk::Binding::trainable(model.params);
  model::PassOptions opt;
  opt.mode = nk::NormMode::Train;
  opt.update_running_stats = true;
  const nk::Var loss = batch_loss(model, params, batch, opt);
  const double value = loss.value().item();
  if (!std::isfinite(value)) {
    model.norms = saved_norms;
    throw NumericError("training loss is not finite");
  }
  nk::backward(loss);
  try {
    optimizer.step(model.params, params.gradients());
  } catch (const OptimizerError&) {
    model.norms = saved_norms;
    throw;
  }
  return value;
}

nk::Array predict_recording(const model::Model& model, const nk::Array& signals, std::size_t resolution,
                            std::size_t chunk_epochs, std::size_t context_epochs) {
  if (signals.rank() != 2 || signals.dim(1) % kSamplesPerEpoch != 0) {
    throw DimensionError("predict_recording expects [C, epochs * 3840] signals");
  }
  const std::size_t epochs = signals.dim(1) / kSamplesPerEpoch;
  if (chunk_epochs == 0 || chunk_epochs >= epochs) return model::predict(model, signals, resolution).probabilities;
  const std::size_t unit = model.config.required_multiple() / kSamplesPerEpoch;
  if (chunk_epochs % unit != 0 || context_epochs % unit != 0) {
    throw ConfigError("chunk and context lengths must be multiples of " + std::to_string(unit) + " epochs");
  }
  nk::Array out({epochs * resolution, kNumStages});
  const std::size_t channels = signals.dim(0);
  for (std::size_t c0 = 0; c0 < epochs; c0 += chunk_epochs) {
    const std::size_t own = std::min(chunk_epochs, epochs - c0);
    const std::size_t lo = c0 >= context_epochs ? c0 - context_epochs : 0;
    const std::size_t hi = std::min(epochs, c0 + own + context_epochs);
    nk::Array piece({channels, (hi - lo) * kSamplesPerEpoch});
    for (std::size_t c = 0; c < channels; ++c) {
      const auto row = signals.row(c).subspan(lo * kSamplesPerEpoch, (hi - lo) * kSamplesPerEpoch);
      std::copy(row.begin(), row.end(), piece.row(c).begin());
    }
    const nk::Array probs = model::predict(model, piece, resolution).probabilities;
    const std::size_t skip = (c0 - lo) * resolution;
    for (std::size_t r = 0; r < own * resolution; ++r) {
      std::copy(probs.row(skip + r).begin(), probs.row(skip + r).end(), out.row(c0 * resolution + r).begin());
    }
  }
  return out;
}

double validate(const model::Model& model, std::span<const io::LoadedRecording> corpus, eval::AbsentPolicy policy) {
  if (corpus.empty()) throw EvaluationError("validation corpus is empty");
  std::vector<eval::RecordingResult> results;
  std::uint64_t scoreable = 0;
  for (const io::LoadedRecording& r : corpus) {
    const auto predicted = eval::argmax_stages(predict_recording(model, r.prepared.signals, 1));
    results.push_back({r.entry.dataset, r.entry.id, eval::confusion(predicted, r.prepared.labels)});
    scoreable += results.back().counts.total();
  }
  if (scoreable == 0) throw EvaluationError("validation corpus has no scoreable epochs");
  // Datasets without scoreable epochs are left out of the average.
  std::vector<eval::RecordingResult> scored;
  for (auto& r : results) {
    if (r.counts.total() > 0) scored.push_back(std::move(r));
  }
  return eval::mean_dataset_mf1(scored, policy);
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write '" + tmp.string() + "'");
    os << text;
    if (!os) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string RunLog::to_csv() const {
  std::string out = "epoch,train_loss,valid_mf1,best_epoch\n";
  std::size_t best = 0;
  for (const EpochRecord& e : epochs) {
    if (e.improved) best = e.epoch;
    out += std::to_string(e.epoch) + "," + format_number(e.train_loss) + "," + format_number(e.valid_mf1) + "," +
           std::to_string(best) + "\n";
  }
  return out;
}

std::string RunLog::timing_csv() const {
  std::string out = "epoch,wall_seconds\n";
  for (const EpochRecord& e : epochs) out += std::to_string(e.epoch) + "," + format_number(e.wall_seconds) + "\n";
  return out;
}

nlohmann::json RunLog::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const EpochRecord& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"valid_mf1", e.valid_mf1},
                    {"wall_seconds", e.wall_seconds},
                    {"improved", e.improved}});
  }
  return {{"epochs", rows}, {"best_epoch", best_epoch}};
}

RunLog RunLog::from_json(const nlohmann::json& j) {
  RunLog log;
  log.best_epoch = j.at("best_epoch").get<std::size_t>();
  for (const auto& r : j.at("epochs")) {
    log.epochs.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                          r.at("valid_mf1").get<double>(), r.at("wall_seconds").get<double>(),
                          r.at("improved").get<bool>()});
  }
  return log;
}

namespace {

struct ResumeState {
  model::Model current;
  nk::AmsGrad optimizer;
  RunLog log;
  std::size_t stale_epochs = 0;
};

void save_state(const fs::path& path, const model::Model& current, const nk::AmsGrad& opt, const RunLog& log,
                std::size_t stale, const std::string& hash) {
  model::TensorFile file = model::model_tensors(
      current, {{"config_hash", hash}, {"optimizer_steps", opt.steps()}, {"log", log.to_json()}, {"stale_epochs", stale}});
  const auto add = [&](const std::string& prefix, const std::vector<nk::Array>& arrays) {
    for (std::size_t i = 0; i < arrays.size(); ++i) file.tensors.emplace_back(prefix + current.params.name(i), arrays[i]);
  };
  add("opt.m.", opt.first_moment());
  add("opt.v.", opt.second_moment());
  add("opt.vmax.", opt.max_second_moment());
  model::write_tensor_file(path, file);
}

ResumeState load_state(const fs::path& path, const nk::AmsGradConfig& opt_config, const std::string& hash) {
  const model::TensorFile file = model::read_tensor_file(path);
  const std::string stored = file.meta.value("config_hash", std::string());
  if (stored != hash) {
    throw ConfigError("resume: state in '" + path.string() + "' was written for configuration " + stored +
                      ", this run has " + hash);
  }
  ResumeState s{model::model_from_tensors(file), nk::AmsGrad(opt_config), RunLog::from_json(file.meta.at("log")),
                file.meta.at("stale_epochs").get<std::size_t>()};
  const auto steps = file.meta.at("optimizer_steps").get<std::uint64_t>();
  if (steps > 0) {
    std::vector<nk::Array> m, v, vmax;
    for (std::size_t i = 0; i < s.current.params.size(); ++i) {
      const std::string& name = s.current.params.name(i);
      m.push_back(file.at("opt.m." + name));
      v.push_back(file.at("opt.v." + name));
      vmax.push_back(file.at("opt.vmax." + name));
    }
    s.optimizer.restore(steps, std::move(m), std::move(v), std::move(vmax));
  }
  return s;
}

}  // namespace

TrainResult train(const model::ModelConfig& config, std::span<const io::LoadedRecording> train_set,
                  std::span<const io::LoadedRecording> valid_set, const TrainConfig& train_config,
                  const sampling::SamplingConfig& sampling_config, const TrainOptions& options) {
  train_config.validate();
  config.validate();
  if (train_set.empty()) throw ConfigError("train: the training corpus is empty");
  const auto validator = options.validator ? options.validator : [&](const model::Model& m) {
    return validate(m, valid_set, train_config.validation_policy);
  };
  if (!options.validator) {
    if (valid_set.empty()) throw EvaluationError("train: the validation corpus is empty");
    bool any = false;
    for (const auto& r : valid_set) {
      for (Stage s : r.prepared.labels) any = any || is_scored(s);
    }
    if (!any) throw EvaluationError("train: the validation corpus has no scoreable epochs");
  }

  const TrainingCorpus corpus(train_set);
  const auto index = corpus.index();
  nk::AmsGradConfig opt_config;
  opt_config.lr = train_config.lr;

  const bool persist = !options.out_dir.empty();
  const fs::path state_path = options.out_dir / "state.ckpt", best_path = options.out_dir / "best.ckpt";
  if (persist) fs::create_directories(options.out_dir);

  TrainResult result{model::Model::initialize(config, train_config.seed), {}, {}, false};
  model::Model current = result.best;
  nk::AmsGrad optimizer(opt_config);
  std::size_t stale = 0;
  double best_mf1 = -std::numeric_limits<double>::infinity();

  if (options.resume && persist && fs::exists(state_path)) {
    ResumeState s = load_state(state_path, opt_config, options.config_hash);
    if (s.current.config.to_json() != config.to_json()) throw ConfigError("resume: model configuration differs");
    current = std::move(s.current);
    optimizer = std::move(s.optimizer);
    result.log = std::move(s.log);
    stale = s.stale_epochs;
    if (result.log.best_epoch > 0) {
      result.best = model::load_model(best_path);
      best_mf1 = result.log.epochs.at(result.log.best_epoch - 1).valid_mf1;
    }
    if (stale >= train_config.patience) {
      result.stop_reason = "patience";
      return result;
    }
  }

  const nlohmann::json meta_base = {{"config_hash", options.config_hash}, {"train", train_config.to_json()}};
  for (std::size_t epoch = result.log.epochs.size() + 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    sampling::Sampler sampler(index, sampling_config, Rng::stream(train_config.seed, epoch).next_u64());
    double loss_sum = 0.0;
    try {
      for (std::size_t u = 0; u < train_config.updates_per_epoch; ++u) {
        const auto samples = sampler.draw_batch(train_config.batch_size);
        loss_sum += train_step(current, optimizer, assemble_batch(corpus, samples));
      }
    } catch (const NumericError&) {
      result.aborted = true;
    } catch (const OptimizerError&) {
      result.aborted = true;
    }
    if (result.aborted) {
      result.stop_reason = "non-finite loss";
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_config.updates_per_epoch);
    rec.valid_mf1 = validator(current);
    rec.improved = rec.valid_mf1 > best_mf1 + train_config.min_improvement;
    if (rec.improved) {
      best_mf1 = rec.valid_mf1;
      result.best = current;
      result.log.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);

    if (persist) {
      if (rec.improved) {
        nlohmann::json meta = meta_base;
        meta["epoch"] = epoch;
        meta["valid_mf1"] = rec.valid_mf1;
        model::save_model(best_path, result.best, meta);
      }
      save_state(state_path, current, optimizer, result.log, stale, options.config_hash);
      write_text(options.out_dir / "runlog.csv", result.log.to_csv());
      write_text(options.out_dir / "timing.csv", result.log.timing_csv());
    }
    if (options.on_epoch) options.on_epoch(rec, current);
    if (stale >= train_config.patience) {
      result.stop_reason = "patience";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  if (persist && result.log.best_epoch == 0) {
    nlohmann::json meta = meta_base;
    meta["epoch"] = 0;
    model::save_model(best_path, result.best, meta);
  }
  return result;
}

}  // namespace anysleep::train
