#include "anysleep/signal_io/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

#include "anysleep/core/errors.hpp"

namespace anysleep::io {

namespace {

constexpr double kKaiserBeta = 8.6;
constexpr std::size_t kMaxFactor = 1024;

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x); }

std::string normalize_symbol(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  const std::string prefix = "SLEEPSTAGE";
  if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) s = s.substr(prefix.size());
  return s;
}

}  // namespace

ResampleRatio resample_ratio(double rate_in, double rate_out) {
  if (!(rate_in > 0.0) || !(rate_out > 0.0)) throw ResampleError("resample: rates must be positive");
  const auto as_fraction = [](double r) -> std::pair<std::uint64_t, std::uint64_t> {
    for (std::uint64_t q = 1; q <= 1000; ++q) {
      const double p = r * static_cast<double>(q);
      if (std::abs(p - std::round(p)) <= 1e-9 * std::max(1.0, p)) return {static_cast<std::uint64_t>(std::llround(p)), q};
    }
    throw ResampleError("resample: rate " + std::to_string(r) + " Hz is not a ratio with denominator <= 1000");
  };
  const auto [pi, qi] = as_fraction(rate_in);
  const auto [po, qo] = as_fraction(rate_out);
  // (po/qo) / (pi/qi) = po*qi / (pi*qo)
  std::uint64_t up = po * qi, down = pi * qo;
  const std::uint64_t g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up > kMaxFactor || down > kMaxFactor) {
    throw ResampleError("resample: ratio " + std::to_string(up) + "/" + std::to_string(down) +
                        " exceeds the supported factor bound of 1024");
  }
  return {static_cast<std::size_t>(up), static_cast<std::size_t>(down)};
}

std::vector<double> resample(std::span<const double> samples, double rate_in, double rate_out) {
  const ResampleRatio ratio = resample_ratio(rate_in, rate_out);
  if (ratio.up == 1 && ratio.down == 1) return {samples.begin(), samples.end()};
  const std::size_t n = samples.size();
  if (n == 0) return {};
  const auto up = static_cast<std::ptrdiff_t>(ratio.up), down = static_cast<std::ptrdiff_t>(ratio.down);
  const std::ptrdiff_t half = 10 * std::max(up, down);
  const double cutoff = 0.9 * std::min(1.0 / static_cast<double>(up), 1.0 / static_cast<double>(down));

  std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
  const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
  for (std::ptrdiff_t j = -half; j <= half; ++j) {
    const double r = static_cast<double>(j) / static_cast<double>(half);
    const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    taps[static_cast<std::size_t>(j + half)] =
        static_cast<double>(up) * cutoff * sinc(cutoff * static_cast<double>(j)) * window;
  }

  const auto sn = static_cast<std::ptrdiff_t>(n);
  const auto at = [&](std::ptrdiff_t k) {
    if (sn == 1) return samples[0];
    const std::ptrdiff_t period = 2 * (sn - 1);
    k %= period;
    if (k < 0) k += period;
    return samples[static_cast<std::size_t>(k < sn ? k : period - k)];
  };

  const std::size_t n_out = (2 * n * ratio.up + ratio.down) / (2 * ratio.down);
  std::vector<double> out(n_out);
  for (std::size_t m = 0; m < n_out; ++m) {
    const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(m) * down;
    // Inputs k with |t - k*up| <= half.
    std::ptrdiff_t k_lo = t - half;
    k_lo = k_lo >= 0 ? (k_lo + up - 1) / up : -((-k_lo) / up);
    const std::ptrdiff_t k_hi_num = t + half;
    const std::ptrdiff_t k_hi = k_hi_num >= 0 ? k_hi_num / up : -((-k_hi_num + up - 1) / up);
    double acc = 0.0;
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) acc += at(k) * taps[static_cast<std::size_t>(t - k * up + half)];
    out[m] = acc;
  }
  return out;
}

std::vector<double> resample_128(std::span<const double> samples, double rate_in) {
  return resample(samples, rate_in, kModelRateHz);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DimensionError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

Normalized normalize_robust(std::span<const double> samples) {
  if (samples.size() < 4) throw DimensionError("normalize_robust needs at least 4 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  Normalized out;
  out.median = quantile_sorted(sorted, 0.5);
  out.iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  if (out.iqr == 0.0) {
    out.iqr = 1.0;
    out.degenerate = true;
  }
  out.samples.reserve(samples.size());
  for (double x : samples) out.samples.push_back(std::clamp((x - out.median) / out.iqr, -kClipLimit, kClipLimit));
  return out;
}

Stage harmonize_label(std::string_view raw) {
  const std::string s = normalize_symbol(raw);
  if (s == "W" || s == "WAKE" || s == "0") return Stage::Wake;
  if (s == "N1" || s == "S1" || s == "1") return Stage::N1;
  if (s == "N2" || s == "S2" || s == "2") return Stage::N2;
  if (s == "N3" || s == "S3" || s == "3" || s == "N4" || s == "S4" || s == "4") return Stage::N3;
  if (s == "R" || s == "REM" || s == "5") return Stage::REM;
  if (s == "MOVEMENT" || s == "MOVEMENTTIME" || s == "MT" || s == "M" || s == "ARTIFACT" || s == "ARTEFACT" ||
      s == "UNKNOWN" || s == "UNSCORED" || s == "?" || s == "EXC") {
    return Stage::Excluded;
  }
  throw MappingError(std::string(raw), "unknown stage label '" + std::string(raw) + "'");
}

Hypnogram harmonize_labels(std::span<const std::string> raw, double epoch_seconds) {
  Hypnogram h;
  h.epoch_seconds = epoch_seconds;
  h.labels.reserve(raw.size());
  for (const std::string& r : raw) h.labels.push_back(harmonize_label(r));
  return h;
}

PreparedRecording prepare_recording(const Recording& recording, const Hypnogram& hypnogram,
                                    std::span<const std::size_t> channels) {
  std::vector<std::size_t> pick(channels.begin(), channels.end());
  if (pick.empty()) {
    pick.resize(recording.channels.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
  }
  if (pick.empty()) throw ConfigError("recording '" + recording.id + "' has no channels");
  if (hypnogram.epoch_seconds != kEpochSeconds) throw ConfigError("hypnogram epochs must be 30 s");

  std::vector<std::vector<double>> resampled;
  std::size_t length = SIZE_MAX;
  for (std::size_t idx : pick) {
    if (idx >= recording.channels.size()) throw ConfigError("channel index out of range");
    const Channel& c = recording.channels[idx];
    resampled.push_back(resample_128(c.samples, c.rate_hz));
    length = std::min(length, resampled.back().size());
  }
  const std::size_t epochs = std::min(length / kSamplesPerEpoch, hypnogram.labels.size());
  if (epochs == 0) throw ConfigError("recording '" + recording.id + "' is shorter than one epoch");
  const std::size_t t = epochs * kSamplesPerEpoch;

  PreparedRecording out;
  out.id = recording.id;
  out.signals = nk::Array({pick.size(), t});
  for (std::size_t i = 0; i < pick.size(); ++i) {
    const Channel& c = recording.channels[pick[i]];
    const Normalized norm = normalize_robust(std::span<const double>(resampled[i]).first(t));
    std::copy(norm.samples.begin(), norm.samples.end(), out.signals.row(i).begin());
    out.channel_names.push_back(c.name);
    out.modalities.push_back(c.modality);
    out.degenerate.push_back(norm.degenerate);
  }
  out.labels.assign(hypnogram.labels.begin(), hypnogram.labels.begin() + static_cast<std::ptrdiff_t>(epochs));
  return out;
}

}  // namespace anysleep::io
