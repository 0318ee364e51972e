#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anysleep/numkernel/array.hpp"
#include "anysleep/signal_io/recording.hpp"

namespace anysleep::io {

struct ResampleRatio {
  std::size_t up = 1;
  std::size_t down = 1;
};

// out/in as a reduced integer ratio. The input rate must be p/q with
// q <= 1000; ratios with either factor above 1024 are rejected
// (ResampleError).
ResampleRatio resample_ratio(double rate_in, double rate_out);

// Polyphase resampling with a Kaiser-windowed sinc (beta 8.6, cutoff
// 0.9 * min(pi/up, pi/down), half-length 10 * max(up, down) taps at the
// upsampled rate, gain up). The input is mirrored at both ends (x[-k] = x[k])
// before filtering. Output length is n * up / down rounded half up, so durations agree within half an output sample.
std::vector<double> resample(std::span<const double> samples, double rate_in, double rate_out);
std::vector<double> resample_128(std::span<const double> samples, double rate_in);

// Linearly interpolated quantile on the sorted sample (type 7).
double quantile_sorted(std::span<const double> sorted, double p);

struct Normalized {
  std::vector<double> samples;
  double median = 0.0;
  double iqr = 1.0;
  bool degenerate = false;  // IQR was zero; divided by 1 instead
};

inline constexpr double kClipLimit = 20.0;

// (x - median) / IQR, clipped to [-20, 20]. Requires at least 4 samples.
Normalized normalize_robust(std::span<const double> samples);

// Case-insensitive mapping of raw stage symbols. Recognized: W/WAKE/0,
// N1/S1/1, N2/S2/2, N3/S3/3, N4/S4/4 (merged into N3), R/REM/5, the
// "Sleep stage X" spellings, and MOVEMENT/MT/M/ARTIFACT/ARTEFACT/UNKNOWN/
// UNSCORED/?/EXC, which become Excluded. Anything else throws MappingError.
Stage harmonize_label(std::string_view raw);
Hypnogram harmonize_labels(std::span<const std::string> raw, double epoch_seconds = kEpochSeconds);

// Model-ready recording: selected channels at 128 Hz, robust-normalized,
// trimmed to the epochs covered by both the signals and the hypnogram.
struct PreparedRecording {
  std::string id;
  std::vector<std::string> channel_names;
  std::vector<Modality> modalities;
  nk::Array signals;  // [C, epochs * 3840]
  std::vector<Stage> labels;
  std::vector<bool> degenerate;

  std::size_t epochs() const { return labels.size(); }
};

// `channels` selects and orders channels by index; empty means all.
PreparedRecording prepare_recording(const Recording& recording, const Hypnogram& hypnogram,
                                    std::span<const std::size_t> channels = {});

}  // namespace anysleep::io
