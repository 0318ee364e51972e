#include "anysleep/signal_io/recording.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace anysleep::io {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

constexpr std::array<std::string_view, 27> kEegElectrodes = {
    "FP1", "FP2", "FPZ", "F3", "F4", "F7", "F8", "FZ", "C3", "C4", "CZ", "P3", "P4", "PZ",
    "O1",  "O2",  "OZ",  "T3", "T4", "T5", "T6", "T7", "T8", "M1", "M2", "A1", "A2"};
constexpr std::array<std::string_view, 6> kEogElectrodes = {"E1", "E2", "LOC", "ROC", "EOGL", "EOGR"};

}  // namespace

std::string_view modality_name(Modality m) { return m == Modality::EEG ? "EEG" : "EOG"; }

std::optional<Modality> infer_modality(std::string_view label) {
  const std::string u = upper(trim(label));
  if (u.rfind("EEG", 0) == 0) return Modality::EEG;
  if (u.rfind("EOG", 0) == 0) return Modality::EOG;
  const std::string electrode = u.substr(0, u.find_first_of("-: "));
  if (std::find(kEegElectrodes.begin(), kEegElectrodes.end(), electrode) != kEegElectrodes.end()) {
    return Modality::EEG;
  }
  if (std::find(kEogElectrodes.begin(), kEogElectrodes.end(), electrode) != kEogElectrodes.end()) {
    return Modality::EOG;
  }
  return std::nullopt;
}

std::size_t Recording::count(Modality m) const {
  return static_cast<std::size_t>(
      std::count_if(channels.begin(), channels.end(), [m](const Channel& c) { return c.modality == m; }));
}

std::string_view event_kind_name(EventKind k) { return k == EventKind::Arousal ? "arousal" : "candidate"; }

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  if (name == "arousal") return EventKind::Arousal;
  if (name == "candidate") return EventKind::Candidate;
  return std::nullopt;
}

}  // namespace anysleep::io
