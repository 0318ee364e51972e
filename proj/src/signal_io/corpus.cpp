#include "anysleep/signal_io/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"
#include "anysleep/signal_io/edf.hpp"
#include "anysleep/signal_io/sidecar.hpp"

namespace anysleep::io {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

nlohmann::json CorpusSpec::to_json() const {
  nlohmann::json ds = nlohmann::json::array();
  for (const DatasetSpec& d : datasets) {
    ds.push_back({{"name", d.name}, {"params", d.params.to_json()}, {"train", d.train}, {"valid", d.valid}, {"test", d.test}});
  }
  return {{"seed", seed}, {"datasets", ds}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  try {
    CorpusSpec s;
    s.seed = j.value("seed", s.seed);
    for (const auto& d : j.at("datasets")) {
      DatasetSpec ds;
      ds.name = d.at("name").get<std::string>();
      if (d.contains("params")) ds.params = SynthParams::from_json(d.at("params"));
      ds.train = d.value("train", std::size_t{0});
      ds.valid = d.value("valid", std::size_t{0});
      ds.test = d.value("test", std::size_t{0});
      if (ds.name.empty() || ds.name.find_first_of("/\\.") != std::string::npos) {
        throw ConfigError("dataset name '" + ds.name + "' is not a plain directory name");
      }
      s.datasets.push_back(std::move(ds));
    }
    if (s.datasets.empty()) throw ConfigError("corpus spec lists no datasets");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corpus spec: ") + e.what());
  }
}

CorpusSpec CorpusSpec::desk(std::uint64_t seed) {
  CorpusSpec s;
  s.seed = seed;
  SynthParams a;
  a.eeg_channels = 2;
  a.eog_channels = 2;
  a.epochs = 120;
  a.arousal_rate_per_hour = 20.0;
  SynthParams b = a;
  b.eeg_channels = 3;
  b.eog_channels = 1;
  s.datasets = {{"synth_a", a, 30, 5, 5}, {"synth_b", b, 30, 5, 5}};
  return s;
}

std::vector<std::string> Corpus::datasets() const {
  std::vector<std::string> names;
  for (const CorpusEntry& e : entries) {
    if (std::find(names.begin(), names.end(), e.dataset) == names.end()) names.push_back(e.dataset);
  }
  return names;
}

std::vector<CorpusEntry> Corpus::select(Split split) const {
  std::vector<CorpusEntry> out;
  for (const CorpusEntry& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

std::uint64_t recording_seed(std::uint64_t corpus_seed, const std::string& dataset, const std::string& id) {
  return Rng::stream(corpus_seed, dataset + "/" + id).next_u64();
}

Corpus generate_corpus(const CorpusSpec& spec, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest = {{"format", "anysleep-corpus"}, {"version", 1}, {"seed", spec.seed}, {"generator", spec.to_json()}};
  nlohmann::json recordings = nlohmann::json::array();
  for (const DatasetSpec& ds : spec.datasets) {
    fs::create_directories(dir / ds.name);
    std::size_t index = 0;
    for (Split split : {Split::Train, Split::Valid, Split::Test}) {
      const std::size_t n = split == Split::Train ? ds.train : split == Split::Valid ? ds.valid : ds.test;
      for (std::size_t i = 0; i < n; ++i, ++index) {
        char id[64];
        std::snprintf(id, sizeof id, "%s-%03zu", ds.name.c_str(), index);
        const std::uint64_t seed = recording_seed(spec.seed, ds.name, id);
        SynthRecording rec = synth_generate(seed, ds.params);
        rec.recording.id = id;
        const std::string base = ds.name + "/" + id;
        write_edf(rec.recording, dir / (base + ".edf"));
        write_hypnogram_csv(dir / (base + ".hyp.csv"), rec.hypnogram);
        write_events_csv(dir / (base + ".events.csv"), rec.arousals);
        recordings.push_back({{"dataset", ds.name},
                              {"id", id},
                              {"split", split_name(split)},
                              {"seed", seed},
                              {"edf", base + ".edf"},
                              {"hypnogram", base + ".hyp.csv"},
                              {"events", base + ".events.csv"}});
      }
    }
  }
  manifest["recordings"] = recordings;
  {
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw Error("cannot write manifest in '" + dir.string() + "'");
    os << manifest.dump(2) << '\n';
  }
  return load_corpus(dir);
}

Corpus load_corpus(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open corpus manifest '" + file.string() + "'");
  Corpus c;
  c.root = file.parent_path();
  try {
    c.manifest = nlohmann::json::parse(is);
    for (const auto& r : c.manifest.at("recordings")) {
      CorpusEntry e;
      e.dataset = r.at("dataset").get<std::string>();
      e.id = r.at("id").get<std::string>();
      e.split = split_from_name(r.value("split", std::string("train")));
      e.edf = c.root / r.at("edf").get<std::string>();
      e.hypnogram = c.root / r.at("hypnogram").get<std::string>();
      if (r.contains("events")) e.events = c.root / r.at("events").get<std::string>();
      c.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corpus manifest '" + file.string() + "': " + e.what());
  }
  return c;
}

LoadedRecording load_entry(const CorpusEntry& entry) {
  Recording rec = read_edf(entry.edf);
  rec.id = entry.id;
  const Hypnogram hyp = read_hypnogram_csv(entry.hypnogram);
  LoadedRecording out{entry, prepare_recording(rec, hyp), {}};
  if (!entry.events.empty() && fs::exists(entry.events)) out.events = read_events_csv(entry.events);
  return out;
}

std::vector<LoadedRecording> load_entries(const std::vector<CorpusEntry>& entries) {
  std::vector<LoadedRecording> out;
  out.reserve(entries.size());
  for (const CorpusEntry& e : entries) out.push_back(load_entry(e));
  return out;
}

}  // namespace anysleep::io
