#include "anysleep/signal_io/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"

namespace anysleep::io {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Additive signal primitives over one segment of samples starting at t0.
class Painter {
 public:
  Painter(std::span<double> out, double fs, Rng& rng) : out_(out), fs_(fs), rng_(rng) {}

  // Sum of three sinusoids drawn from [lo, hi] Hz with slow amplitude
  // modulation; `amp` is the overall RMS-like amplitude.
  void band(double lo, double hi, double amp) {
    for (int c = 0; c < 3; ++c) {
      const double f = rng_.uniform(lo, hi);
      const double phase = rng_.uniform(0.0, kTwoPi);
      const double mod_f = rng_.uniform(0.05, 0.3), mod_phase = rng_.uniform(0.0, kTwoPi);
      const double a = amp * std::sqrt(2.0 / 3.0) * rng_.uniform(0.7, 1.3);
      // Carrier and modulator advance by complex rotation.
      const std::complex<double> step = std::polar(1.0, kTwoPi * f / fs_);
      const std::complex<double> mod_step = std::polar(1.0, kTwoPi * mod_f / fs_);
      std::complex<double> carrier = std::polar(1.0, phase), mod = std::polar(1.0, mod_phase);
      for (std::size_t i = 0; i < out_.size(); ++i) {
        out_[i] += a * (1.0 + 0.4 * mod.imag()) * carrier.imag();
        carrier *= step;
        mod *= mod_step;
      }
    }
  }

  void white(double amp) {
    for (double& v : out_) v += amp * rng_.normal();
  }

  // Gaussian-windowed oscillation bursts.
  void bursts(double lo, double hi, double amp, std::size_t count, double dur_lo, double dur_hi) {
    const double len = static_cast<double>(out_.size()) / fs_;
    for (std::size_t b = 0; b < count; ++b) {
      const double f = rng_.uniform(lo, hi);
      const double dur = rng_.uniform(dur_lo, dur_hi);
      const double centre = rng_.uniform(dur / 2, std::max(dur / 2, len - dur / 2));
      const double sigma = dur / 4.0;
      add_shape(centre, 3 * sigma, [&](double dt) {
        return amp * std::exp(-0.5 * (dt / sigma) * (dt / sigma)) * std::sin(kTwoPi * f * dt);
      });
    }
  }

  // Sharp negative wave followed by a slower positive one.
  void k_complexes(double amp, std::size_t count) {
    const double len = static_cast<double>(out_.size()) / fs_;
    for (std::size_t k = 0; k < count; ++k) {
      const double centre = rng_.uniform(1.0, std::max(1.0, len - 1.5));
      const double a = amp * rng_.uniform(0.8, 1.2);
      add_shape(centre, 1.5, [&](double dt) {
        return -a * std::exp(-0.5 * (dt / 0.12) * (dt / 0.12)) + 0.6 * a * std::exp(-0.5 * ((dt - 0.4) / 0.25) * ((dt - 0.4) / 0.25));
      });
    }
  }

  void blinks(double amp, std::size_t count) {
    const double len = static_cast<double>(out_.size()) / fs_;
    for (std::size_t k = 0; k < count; ++k) {
      const double centre = rng_.uniform(0.0, len);
      const double a = amp * rng_.uniform(0.7, 1.3);
      add_shape(centre, 0.6, [&](double dt) { return a * std::exp(-0.5 * (dt / 0.12) * (dt / 0.12)); });
    }
  }

  // Rapid eye movements: fast deflection, slow return, alternating sign.
  void rapid_eye_movements(double amp, std::size_t count) {
    const double len = static_cast<double>(out_.size()) / fs_;
    double sign = rng_.uniform() < 0.5 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double onset = rng_.uniform(0.0, len);
      const double a = sign * amp * rng_.uniform(0.7, 1.3);
      add_shape(onset + 1.5, 1.5, [&](double dt) {
        const double s = dt + 1.5;
        return s < 0 ? 0.0 : a * (1.0 - std::exp(-s / 0.04)) * std::exp(-s / 0.6);
      });
      sign = -sign;
    }
  }

 private:
  template <typename Shape>
  void add_shape(double centre, double half_width, Shape&& shape) {
    const auto lo = static_cast<std::ptrdiff_t>(std::floor((centre - half_width) * fs_));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil((centre + half_width) * fs_));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0); i < std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_.size())); ++i) {
      out_[static_cast<std::size_t>(i)] += shape(static_cast<double>(i) / fs_ - centre);
    }
  }

  std::span<double> out_;
  double fs_;
  Rng& rng_;
};

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Cortical activity of one stage, painted into `out`.
void paint_eeg(Stage stage, std::span<double> out, double fs, Rng& rng) {
  Painter p(out, fs, rng);
  switch (stage) {
    case Stage::Wake:
      p.band(8, 12, 24);
      p.band(15, 30, 9);
      p.white(6);
      break;
    case Stage::N1:
      p.band(4, 7, 16);
      p.band(8, 12, 5);
      p.band(2, 4, 6);
      break;
    case Stage::N2:
      p.band(4, 8, 14);
      p.bursts(12, 14, 35, between(rng, 2, 4), 0.6, 2.0);
      p.k_complexes(80, between(rng, 0, 2));
      break;
    case Stage::N3:
      p.band(0.5, 2, 75);
      p.band(4, 8, 6);
      break;
    case Stage::REM:
      p.band(4, 8, 20);
      p.band(2, 4, 8);
      p.white(3);
      break;
    case Stage::Excluded:
      p.white(120);
      p.band(0.1, 1, 150);
      break;
  }
}

// Eye activity of one stage.
void paint_eye(Stage stage, std::span<double> out, double fs, Rng& rng) {
  Painter p(out, fs, rng);
  switch (stage) {
    case Stage::Wake:
      p.blinks(150, between(rng, 3, 8));
      p.band(15, 30, 6);
      break;
    case Stage::N1: p.band(0.15, 0.5, 60); break;
    case Stage::N2:
    case Stage::N3: break;
    case Stage::REM: p.rapid_eye_movements(120, between(rng, 3, 8)); break;
    case Stage::Excluded: p.white(150); break;
  }
}

void add_background(std::span<double> out, double amp, double white_amp, Rng& rng) {
  constexpr double a = 0.97;
  const double drive = amp * std::sqrt(1.0 - a * a);
  double state = amp * rng.normal();
  for (double& v : out) {
    state = a * state + drive * rng.normal();
    v += state + white_amp * rng.normal();
  }
}

}  // namespace

nlohmann::json SynthParams::to_json() const {
  return {{"eeg_channels", eeg_channels},
          {"eog_channels", eog_channels},
          {"epochs", epochs},
          {"arousal_rate_per_hour", arousal_rate_per_hour},
          {"rate_hz", rate_hz},
          {"artifact_probability", artifact_probability},
          {"noise_scale", noise_scale}};
}

SynthParams SynthParams::from_json(const nlohmann::json& j) {
  SynthParams p;
  p.eeg_channels = j.value("eeg_channels", p.eeg_channels);
  p.eog_channels = j.value("eog_channels", p.eog_channels);
  p.epochs = j.value("epochs", p.epochs);
  p.arousal_rate_per_hour = j.value("arousal_rate_per_hour", p.arousal_rate_per_hour);
  p.rate_hz = j.value("rate_hz", p.rate_hz);
  p.artifact_probability = j.value("artifact_probability", p.artifact_probability);
  p.noise_scale = j.value("noise_scale", p.noise_scale);
  return p;
}

const std::array<std::array<double, 5>, 5>& synth_transition_matrix() {
  static const std::array<std::array<double, 5>, 5> m = {{
      {0.80, 0.15, 0.03, 0.00, 0.02},  // Wake
      {0.10, 0.55, 0.30, 0.00, 0.05},  // N1
      {0.04, 0.05, 0.78, 0.10, 0.03},  // N2
      {0.02, 0.01, 0.12, 0.85, 0.00},  // N3
      {0.05, 0.07, 0.05, 0.00, 0.83},  // REM
  }};
  return m;
}

SynthRecording synth_generate(std::uint64_t seed, const SynthParams& params) {
  if (params.eeg_channels + params.eog_channels == 0) throw ConfigError("synth: at least one channel is required");
  if (params.epochs < 2) throw ConfigError("synth: at least 2 epochs are required");
  const double per_epoch = params.rate_hz * kEpochSeconds;
  if (!(params.rate_hz > 0.0) || per_epoch != std::floor(per_epoch)) {
    throw ConfigError("synth: the sampling rate must give a whole number of samples per epoch");
  }
  if (params.arousal_rate_per_hour < 0.0 || params.artifact_probability < 0.0 || params.artifact_probability > 1.0) {
    throw ConfigError("synth: rates and probabilities must be non-negative");
  }
  const double fs = params.rate_hz;
  const auto epoch_len = static_cast<std::size_t>(per_epoch);
  const std::size_t n = params.epochs * epoch_len;

  SynthRecording out;
  Rng chain = Rng::stream(seed, "stages");
  const auto& tm = synth_transition_matrix();
  std::size_t state = 0;
  for (std::size_t e = 0; e < params.epochs; ++e) {
    if (e > 0) state = chain.categorical({tm[state].begin(), tm[state].end()});
    out.hypnogram.labels.push_back(kScoredStages[state]);
  }
  Rng artifacts = Rng::stream(seed, "artifacts");
  for (Stage& s : out.hypnogram.labels) {
    if (params.artifact_probability > 0.0 && artifacts.uniform() < params.artifact_probability) s = Stage::Excluded;
  }
  const auto& labels = out.hypnogram.labels;

  // Arousal placement on a 0.25-s grid.
  Rng place = Rng::stream(seed, "arousals");
  const double total = static_cast<double>(params.epochs) * kEpochSeconds;
  const std::uint64_t count = params.arousal_rate_per_hour > 0.0
                                  ? place.poisson(params.arousal_rate_per_hour * total / 3600.0)
                                  : 0;
  const auto sleep_between = [&](double from, double to) {
    const auto first = static_cast<std::size_t>(std::max(0.0, from) / kEpochSeconds);
    const auto last = static_cast<std::size_t>(std::min(total - 1e-9, to) / kEpochSeconds);
    for (std::size_t e = first; e <= last; ++e) {
      if (labels[e] == Stage::Wake || labels[e] == Stage::Excluded) return false;
    }
    return true;
  };
  for (std::uint64_t a = 0; a < count; ++a) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double duration = std::round(place.uniform(3.0, 15.0) * 4.0) / 4.0;
      const double onset = std::round(place.uniform(10.0, total - duration) * 4.0) / 4.0;
      if (onset < 10.0 || onset + duration > total) continue;
      if (!sleep_between(onset - 10.0, onset + duration)) continue;
      const bool clash = std::any_of(out.arousals.begin(), out.arousals.end(), [&](const EventInterval& e) {
        return onset - 10.0 < e.end() && onset + duration + 10.0 > e.onset;
      });
      if (clash) continue;
      out.arousals.push_back({onset, duration, EventKind::Arousal});
      break;
    }
  }
  std::sort(out.arousals.begin(), out.arousals.end(),
            [](const EventInterval& x, const EventInterval& y) { return x.onset < y.onset; });

  // Stage (or arousal) of every sample range, painted by `paint`.
  const auto render = [&](auto&& paint, std::vector<double>& signal, Rng& rng) {
    for (std::size_t e = 0; e < params.epochs; ++e) {
      paint(labels[e], std::span<double>(signal).subspan(e * epoch_len, epoch_len), fs, rng);
    }
    for (const EventInterval& ev : out.arousals) {
      const auto lo = static_cast<std::size_t>(std::llround(ev.onset * fs));
      const auto hi = std::min(n, static_cast<std::size_t>(std::llround(ev.end() * fs)));
      std::vector<double> burst(hi - lo, 0.0);
      paint(Stage::Wake, burst, fs, rng);
      std::copy(burst.begin(), burst.end(), signal.begin() + static_cast<std::ptrdiff_t>(lo));
    }
  };

  std::vector<double> shared(n, 0.0), eye(n, 0.0);
  Rng shared_rng = Rng::stream(seed, "cortex");
  render(paint_eeg, shared, shared_rng);
  Rng eye_rng = Rng::stream(seed, "eyes");
  render(paint_eye, eye, eye_rng);

  out.recording.id = "synth";
  static constexpr const char* kEegNames[] = {"C3-M2", "C4-M1", "F3-M2", "F4-M1", "O1-M2", "O2-M1"};
  for (std::size_t c = 0; c < params.eeg_channels; ++c) {
    Rng rng = Rng::stream(seed, 100 + c);
    std::vector<double> own(n, 0.0);
    render(paint_eeg, own, rng);
    const double gain = rng.uniform(0.8, 1.2);
    Channel ch;
    ch.name = c < std::size(kEegNames) ? kEegNames[c] : "EEG " + std::to_string(c + 1);
    ch.modality = Modality::EEG;
    ch.rate_hz = fs;
    ch.samples.assign(n, 0.0);
    add_background(ch.samples, 14.0 * params.noise_scale, 5.0 * params.noise_scale, rng);
    for (std::size_t i = 0; i < n; ++i) ch.samples[i] += gain * (0.5 * shared[i] + 0.5 * own[i]) + 0.1 * eye[i];
    out.recording.channels.push_back(std::move(ch));
  }
  for (std::size_t c = 0; c < params.eog_channels; ++c) {
    Rng rng = Rng::stream(seed, 200 + c);
    const double polarity = c % 2 == 0 ? 1.0 : -1.0;
    Channel ch;
    ch.name = c == 0 ? "E1-M2" : c == 1 ? "E2-M1" : "EOG " + std::to_string(c + 1);
    ch.modality = Modality::EOG;
    ch.rate_hz = fs;
    ch.samples.assign(n, 0.0);
    add_background(ch.samples, 10.0 * params.noise_scale, 5.0 * params.noise_scale, rng);
    for (std::size_t i = 0; i < n; ++i) ch.samples[i] += polarity * eye[i] + 0.3 * shared[i];
    out.recording.channels.push_back(std::move(ch));
  }
  return out;
}

}  // namespace anysleep::io
