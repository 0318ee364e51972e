#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "anysleep/signal_io/recording.hpp"

namespace anysleep::io {

// Hypnogram CSV: header "onset_sec,duration_sec,label", one row per epoch,
// labels W/N1/N2/N3/R/EXC. Readers also accept any label known to
// harmonize_label.
void write_hypnogram_csv(std::ostream& os, const Hypnogram& h);
Hypnogram read_hypnogram_csv(std::istream& is);
void write_hypnogram_csv(const std::filesystem::path& path, const Hypnogram& h);
Hypnogram read_hypnogram_csv(const std::filesystem::path& path);

// Events CSV: header "onset_sec,duration_sec,kind".
void write_events_csv(std::ostream& os, const std::vector<EventInterval>& events);
std::vector<EventInterval> read_events_csv(std::istream& is);
void write_events_csv(const std::filesystem::path& path, const std::vector<EventInterval>& events);
std::vector<EventInterval> read_events_csv(const std::filesystem::path& path);

// Seconds with three decimals, or seven when three would not reproduce the
// value (bins of 30/r s go down to 0.0078125 s). Used by every CSV writer.
std::string format_seconds(double s);

}  // namespace anysleep::io
