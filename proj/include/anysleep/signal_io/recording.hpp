#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anysleep/core/stage.hpp"

namespace anysleep::io {

enum class Modality { EEG, EOG };

std::string_view modality_name(Modality m);

// Modality from an EDF-style label. Labels starting with "EEG"/"EOG" decide
// directly; otherwise the electrode name (text before any '-' or ':') is
// looked up in a fixed table (F3, C4, O1, Fpz, ... are EEG; E1, E2, LOC,
// ROC are EOG). Returns nothing for every other channel.
std::optional<Modality> infer_modality(std::string_view label);

struct PhysicalRange {
  double min = 0.0;
  double max = 0.0;
};

struct Channel {
  std::string name;
  Modality modality = Modality::EEG;
  double rate_hz = 128.0;
  std::vector<double> samples;  // microvolts
  // Range declared in the source file; writers must respect it.
  std::optional<PhysicalRange> declared_range;
};

struct Recording {
  std::string id;
  std::vector<Channel> channels;
  // Channels skipped on ingestion, with the reason.
  std::vector<std::string> warnings;

  std::size_t count(Modality m) const;
};

struct Hypnogram {
  double epoch_seconds = kEpochSeconds;
  std::vector<Stage> labels;
};

enum class EventKind { Arousal, Candidate };

std::string_view event_kind_name(EventKind k);
std::optional<EventKind> event_kind_from_name(std::string_view name);

struct EventInterval {
  double onset = 0.0;     // seconds
  double duration = 0.0;  // seconds
  EventKind kind = EventKind::Arousal;

  double end() const { return onset + duration; }
};

}  // namespace anysleep::io
