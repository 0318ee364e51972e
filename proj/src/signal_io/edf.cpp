#include "anysleep/signal_io/edf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "anysleep/core/errors.hpp"

namespace anysleep::io {

namespace {

constexpr std::size_t kFixedHeader = 256;
// Per-signal header fields, stored field-major: all labels, then all
// transducers, and so on.
constexpr std::size_t kLabel = 16, kTransducer = 80, kPhysDim = 8, kNumber = 8, kPrefilter = 80, kReserved = 32;
constexpr std::size_t kSignalHeader = kLabel + kTransducer + kPhysDim + 4 * kNumber + kPrefilter + kNumber + kReserved;
static_assert(kSignalHeader == 256);

std::string field(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  std::string s(reinterpret_cast<const char*>(bytes.data() + offset), width);
  const auto end = s.find_last_not_of(' ');
  s.erase(end == std::string::npos ? 0 : end + 1);
  const auto begin = s.find_first_not_of(' ');
  return begin == std::string::npos ? std::string() : s.substr(begin);
}

double number(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width, const char* what) {
  const std::string s = field(bytes, offset, width);
  char* end = nullptr;
  const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ParseError(std::string("EDF: non-numeric ") + what + " field '" + s + "'", offset);
  }
  return v;
}

long integer(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width, const char* what) {
  const double v = number(bytes, offset, width, what);
  if (v != std::floor(v)) throw ParseError(std::string("EDF: ") + what + " must be an integer", offset);
  return static_cast<long>(v);
}

void put(std::vector<std::uint8_t>& out, const std::string& s, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(i < s.size() ? s[i] : ' '));
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Shortest-loss rendering of a range bound in at most eight characters,
// rounded outwards so the written range still contains the data.
std::string bound_field(double v, bool lower) {
  for (int d = 6; d >= 0; --d) {
    const double scale = std::pow(10.0, d);
    double r = lower ? std::floor(v * scale) / scale : std::ceil(v * scale) / scale;
    std::string s = fixed(r, d);
    if (s.size() > 8) continue;
    const double parsed = std::strtod(s.c_str(), nullptr);
    if (lower ? parsed > v : parsed < v) {
      // Decimal rendering rounded the wrong way; step one unit outwards.
      r += (lower ? -1.0 : 1.0) / scale;
      s = fixed(r, d);
      if (s.size() > 8) continue;
    }
    return s;
  }
  throw RangeError("EDF: physical bound " + std::to_string(v) + " does not fit an 8-character field");
}

std::string integer_field(long v) { return std::to_string(v); }

}  // namespace

double edf_physical(int digital, int digital_min, int digital_max, double physical_min, double physical_max) {
  return (static_cast<double>(digital) - digital_min) * (physical_max - physical_min) /
             (static_cast<double>(digital_max) - digital_min) +
         physical_min;
}

double edf_quantum(const Channel& channel) {
  if (!channel.declared_range) return 0.0;
  return (channel.declared_range->max - channel.declared_range->min) /
         (static_cast<double>(kEdfDigitalMax) - kEdfDigitalMin);
}

Recording parse_edf(std::span<const std::uint8_t> bytes, std::string id) {
  if (bytes.size() < kFixedHeader) throw ParseError("EDF: file shorter than the 256-byte header", bytes.size());
  const long header_bytes = integer(bytes, 184, 8, "header size");
  long records = integer(bytes, 236, 8, "record count");
  const double record_seconds = number(bytes, 244, 8, "record duration");
  const long ns = integer(bytes, 252, 4, "signal count");
  if (ns <= 0) throw ParseError("EDF: signal count must be positive", 252);
  const std::size_t n = static_cast<std::size_t>(ns);
  if (static_cast<std::size_t>(header_bytes) != kFixedHeader * (n + 1)) {
    throw ParseError("EDF: header size does not match 256 * (signals + 1)", 184);
  }
  if (bytes.size() < kFixedHeader * (n + 1)) throw ParseError("EDF: signal headers truncated", bytes.size());
  if (!(record_seconds > 0.0)) throw ParseError("EDF: record duration must be positive", 244);

  struct SignalHeader {
    std::string label;
    double pmin, pmax;
    long dmin, dmax, spr;
  };
  std::vector<SignalHeader> sig(n);
  std::size_t off = kFixedHeader;
  for (std::size_t i = 0; i < n; ++i) sig[i].label = field(bytes, off + i * kLabel, kLabel);
  off += n * (kLabel + kTransducer + kPhysDim);
  for (std::size_t i = 0; i < n; ++i) sig[i].pmin = number(bytes, off + i * kNumber, kNumber, "physical minimum");
  off += n * kNumber;
  for (std::size_t i = 0; i < n; ++i) sig[i].pmax = number(bytes, off + i * kNumber, kNumber, "physical maximum");
  off += n * kNumber;
  for (std::size_t i = 0; i < n; ++i) sig[i].dmin = integer(bytes, off + i * kNumber, kNumber, "digital minimum");
  off += n * kNumber;
  for (std::size_t i = 0; i < n; ++i) {
    sig[i].dmax = integer(bytes, off + i * kNumber, kNumber, "digital maximum");
    if (sig[i].dmax == sig[i].dmin) throw ParseError("EDF: digital minimum equals digital maximum", off + i * kNumber);
  }
  off += n * (kNumber + kPrefilter);
  std::size_t record_bytes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sig[i].spr = integer(bytes, off + i * kNumber, kNumber, "samples per record");
    if (sig[i].spr <= 0) throw ParseError("EDF: samples per record must be positive", off + i * kNumber);
    record_bytes += 2 * static_cast<std::size_t>(sig[i].spr);
  }

  const std::size_t data_start = static_cast<std::size_t>(header_bytes);
  const std::size_t available = bytes.size() - data_start;
  if (records < 0) records = static_cast<long>(available / record_bytes);
  const std::size_t nrec = static_cast<std::size_t>(records);
  if (nrec * record_bytes > available) {
    const std::size_t bad = available / record_bytes;
    throw ParseError("EDF: data record " + std::to_string(bad) + " truncated", data_start + bad * record_bytes);
  }

  Recording rec;
  rec.id = std::move(id);
  std::vector<std::size_t> slot(n, SIZE_MAX);
  for (std::size_t i = 0; i < n; ++i) {
    const auto modality = infer_modality(sig[i].label);
    if (!modality) {
      rec.warnings.push_back("skipped signal '" + sig[i].label + "': not an EEG or EOG channel");
      continue;
    }
    Channel ch;
    ch.name = sig[i].label;
    ch.modality = *modality;
    ch.rate_hz = static_cast<double>(sig[i].spr) / record_seconds;
    ch.declared_range = PhysicalRange{sig[i].pmin, sig[i].pmax};
    ch.samples.reserve(nrec * static_cast<std::size_t>(sig[i].spr));
    slot[i] = rec.channels.size();
    rec.channels.push_back(std::move(ch));
  }

  const std::uint8_t* p = bytes.data() + data_start;
  for (std::size_t r = 0; r < nrec; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t count = static_cast<std::size_t>(sig[i].spr);
      if (slot[i] != SIZE_MAX) {
        auto& out = rec.channels[slot[i]].samples;
        for (std::size_t k = 0; k < count; ++k) {
          const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[2 * k] | (p[2 * k + 1] << 8)));
          out.push_back(edf_physical(raw, static_cast<int>(sig[i].dmin), static_cast<int>(sig[i].dmax), sig[i].pmin,
                                     sig[i].pmax));
        }
      }
      p += 2 * count;
    }
  }
  return rec;
}

Recording read_edf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open EDF file '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_edf(bytes, path.stem().string());
}

std::vector<std::uint8_t> encode_edf(const Recording& recording) {
  if (recording.channels.empty()) throw ConfigError("EDF: recording has no channels");
  const std::size_t n = recording.channels.size();

  long seconds = 0;
  for (long d = 1; d <= 60 && seconds == 0; ++d) {
    bool all = true;
    for (const Channel& c : recording.channels) {
      const double spr = c.rate_hz * static_cast<double>(d);
      all = all && c.rate_hz > 0.0 && std::abs(spr - std::round(spr)) < 1e-9;
    }
    if (all) seconds = d;
  }
  if (seconds == 0) throw ConfigError("EDF: sampling rates admit no whole-second data record");

  std::vector<std::size_t> spr(n);
  std::size_t nrec = 0;
  for (std::size_t i = 0; i < n; ++i) {
    spr[i] = static_cast<std::size_t>(std::llround(recording.channels[i].rate_hz * static_cast<double>(seconds)));
    nrec = std::max(nrec, (recording.channels[i].samples.size() + spr[i] - 1) / spr[i]);
  }

  std::vector<std::string> pmin(n), pmax(n), labels(n);
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Channel& c = recording.channels[i];
    for (double v : c.samples) {
      if (!std::isfinite(v)) throw RangeError("EDF: channel '" + c.name + "' holds a non-finite sample");
    }
    if (c.declared_range) {
      const PhysicalRange& r = *c.declared_range;
      for (double v : c.samples) {
        if (v < r.min || v > r.max) {
          throw RangeError("EDF: sample " + std::to_string(v) + " of channel '" + c.name +
                           "' lies outside the declared physical range");
        }
      }
      pmin[i] = bound_field(r.min, true);
      pmax[i] = bound_field(r.max, false);
    } else {
      double mn = 0.0, mx = 0.0;
      if (!c.samples.empty()) {
        const auto [a, b] = std::minmax_element(c.samples.begin(), c.samples.end());
        mn = *a;
        mx = *b;
      }
      pmin[i] = bound_field(mn, true);
      pmax[i] = bound_field(mx == mn ? mn + 1.0 : mx, false);
    }
    lo[i] = std::strtod(pmin[i].c_str(), nullptr);
    hi[i] = std::strtod(pmax[i].c_str(), nullptr);
    if (!(hi[i] > lo[i])) throw RangeError("EDF: empty physical range for channel '" + c.name + "'");
    labels[i] = infer_modality(c.name) == c.modality ? c.name : std::string(modality_name(c.modality)) + " " + c.name;
    if (labels[i].size() > kLabel) throw ConfigError("EDF: channel label '" + labels[i] + "' exceeds 16 characters");
  }

  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader * (n + 1) + nrec * 2 * [&] {
    std::size_t s = 0;
    for (std::size_t x : spr) s += x;
    return s;
  }());
  put(out, "0", 8);
  put(out, "X X X X", 80);
  put(out, "Startdate X X X X", 80);
  put(out, "01.01.00", 8);
  put(out, "00.00.00", 8);
  put(out, integer_field(static_cast<long>(kFixedHeader * (n + 1))), 8);
  put(out, "", 44);
  put(out, integer_field(static_cast<long>(nrec)), 8);
  put(out, integer_field(seconds), 8);
  put(out, integer_field(static_cast<long>(n)), 4);
  for (std::size_t i = 0; i < n; ++i) put(out, labels[i], kLabel);
  for (std::size_t i = 0; i < n; ++i) put(out, "", kTransducer);
  for (std::size_t i = 0; i < n; ++i) put(out, "uV", kPhysDim);
  for (std::size_t i = 0; i < n; ++i) put(out, pmin[i], kNumber);
  for (std::size_t i = 0; i < n; ++i) put(out, pmax[i], kNumber);
  for (std::size_t i = 0; i < n; ++i) put(out, integer_field(kEdfDigitalMin), kNumber);
  for (std::size_t i = 0; i < n; ++i) put(out, integer_field(kEdfDigitalMax), kNumber);
  for (std::size_t i = 0; i < n; ++i) put(out, "", kPrefilter);
  for (std::size_t i = 0; i < n; ++i) put(out, integer_field(static_cast<long>(spr[i])), kNumber);
  for (std::size_t i = 0; i < n; ++i) put(out, "", kReserved);

  const double span = static_cast<double>(kEdfDigitalMax) - kEdfDigitalMin;
  for (std::size_t r = 0; r < nrec; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = recording.channels[i].samples;
      for (std::size_t k = 0; k < spr[i]; ++k) {
        const std::size_t idx = r * spr[i] + k;
        const double v = s.empty() ? lo[i] : s[std::min(idx, s.size() - 1)];
        const double d = std::round((v - lo[i]) / (hi[i] - lo[i]) * span + kEdfDigitalMin);
        const auto q = static_cast<std::int16_t>(std::clamp(d, double{kEdfDigitalMin}, double{kEdfDigitalMax}));
        const auto u = static_cast<std::uint16_t>(q);
        out.push_back(static_cast<std::uint8_t>(u & 0xFF));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }
  return out;
}

void write_edf(const Recording& recording, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_edf(recording);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace anysleep::io
