#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anysleep/signal_io/recording.hpp"

namespace anysleep::io {

inline constexpr int kEdfDigitalMin = -32768;
inline constexpr int kEdfDigitalMax = 32767;

// Physical value of a digital sample under the EDF linear mapping.
double edf_physical(int digital, int digital_min, int digital_max, double physical_min, double physical_max);

// Parses an EDF file. Signals whose label maps to EEG or EOG become channels
// (physical range kept in `declared_range`); every other signal is skipped
// and named in `warnings`. Throws ParseError with the byte offset of the
// offending field on truncation, zero digital span or non-numeric headers.
Recording parse_edf(std::span<const std::uint8_t> bytes, std::string id = {});
Recording read_edf(const std::filesystem::path& path);

// Serializes with int16 samples over the full digital range. Channels use
// `declared_range` when present (RangeError if a sample falls outside) and
// otherwise their data range widened outwards to fit the 8-character header
// field. Data records last the shortest whole number of seconds that holds
// an integer sample count for every channel; a channel shorter than the
// others is padded with its last sample.
std::vector<std::uint8_t> encode_edf(const Recording& recording);
void write_edf(const Recording& recording, const std::filesystem::path& path);

// Width of one digital step for a channel read from EDF.
double edf_quantum(const Channel& channel);

}  // namespace anysleep::io
