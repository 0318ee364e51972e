#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anysleep/signal_io/preprocess.hpp"
#include "anysleep/signal_io/synth.hpp"

namespace anysleep::io {

enum class Split { Train, Valid, Test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);  // ConfigError on unknown names

// One synthetic dataset: generator parameters plus recording counts per split.
struct DatasetSpec {
  std::string name;
  SynthParams params;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

struct CorpusSpec {
  std::uint64_t seed = 42;
  std::vector<DatasetSpec> datasets;

  nlohmann::json to_json() const;
  static CorpusSpec from_json(const nlohmann::json& j);
  // Two datasets with different montages (2 EEG + 2 EOG, 3 EEG + 1 EOG),
  // 30/5/5 recordings of 120 epochs each, arousals at 20 per hour.
  static CorpusSpec desk(std::uint64_t seed = 42);
};

struct CorpusEntry {
  std::string dataset;
  std::string id;
  Split split = Split::Train;
  std::filesystem::path edf;
  std::filesystem::path hypnogram;
  std::filesystem::path events;
};

struct Corpus {
  std::filesystem::path root;
  nlohmann::json manifest;
  std::vector<CorpusEntry> entries;

  // Dataset names in manifest order.
  std::vector<std::string> datasets() const;
  std::vector<CorpusEntry> select(Split split) const;
};

// Seed of one recording, derived from the corpus seed and its dataset/id.
std::uint64_t recording_seed(std::uint64_t corpus_seed, const std::string& dataset, const std::string& id);

// Writes <dir>/<dataset>/<id>.edf, .hyp.csv and .events.csv for every
// recording plus <dir>/manifest.json, then returns the loaded manifest.
Corpus generate_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);

// Accepts a manifest path or the directory holding manifest.json. Paths in
// the manifest are relative to its directory.
Corpus load_corpus(const std::filesystem::path& path);

struct LoadedRecording {
  CorpusEntry entry;
  PreparedRecording prepared;
  std::vector<EventInterval> events;
};

LoadedRecording load_entry(const CorpusEntry& entry);
std::vector<LoadedRecording> load_entries(const std::vector<CorpusEntry>& entries);

}  // namespace anysleep::io
