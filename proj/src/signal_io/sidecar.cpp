#include "anysleep/signal_io/sidecar.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "anysleep/core/errors.hpp"
#include "anysleep/signal_io/preprocess.hpp"

namespace anysleep::io {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_seconds(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ParseError("not a number: '" + s + "'", line);
  }
  return v;
}

// Reads the header and the data rows (3 cells each). Line numbers are 1-based.
template <typename RowFn>
void read_rows(std::istream& is, const std::string& header, RowFn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header) throw ParseError("expected header '" + header + "'", lineno);
      seen_header = true;
      continue;
    }
    const auto cells = split_row(line);
    if (cells.size() != 3) throw ParseError("expected 3 columns", lineno);
    fn(cells, lineno);
  }
  if (!seen_header) throw ParseError("missing header '" + header + "'", lineno);
}

template <typename Fn>
auto with_file(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return fn(is);
}

template <typename Fn>
void to_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  fn(os);
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace

std::string format_seconds(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  if (std::strtod(buf, nullptr) != s) std::snprintf(buf, sizeof buf, "%.7f", s);
  return buf;
}

void write_hypnogram_csv(std::ostream& os, const Hypnogram& h) {
  os << "onset_sec,duration_sec,label\n";
  for (std::size_t i = 0; i < h.labels.size(); ++i) {
    os << format_seconds(static_cast<double>(i) * h.epoch_seconds) << ',' << format_seconds(h.epoch_seconds) << ','
       << stage_code(h.labels[i]) << '\n';
  }
}

Hypnogram read_hypnogram_csv(std::istream& is) {
  Hypnogram h;
  bool first = true;
  read_rows(is, "onset_sec,duration_sec,label", [&](const std::vector<std::string>& c, std::size_t line) {
    const double onset = parse_seconds(c[0], line);
    const double duration = parse_seconds(c[1], line);
    if (first) {
      if (!(duration > 0.0)) throw ParseError("epoch duration must be positive", line);
      h.epoch_seconds = duration;
      first = false;
    } else if (std::abs(duration - h.epoch_seconds) > 1e-6) {
      throw ParseError("epoch durations differ", line);
    }
    if (std::abs(onset - static_cast<double>(h.labels.size()) * h.epoch_seconds) > 1e-3) {
      throw ParseError("epochs are not contiguous", line);
    }
    const auto code = stage_from_code(c[2]);
    try {
      h.labels.push_back(code ? *code : harmonize_label(c[2]));
    } catch (const MappingError& e) {
      throw ParseError(e.what(), line);
    }
  });
  if (h.labels.empty()) throw ParseError("hypnogram has no epochs", 1);
  return h;
}

void write_hypnogram_csv(const std::filesystem::path& path, const Hypnogram& h) {
  to_file(path, [&](std::ostream& os) { write_hypnogram_csv(os, h); });
}

Hypnogram read_hypnogram_csv(const std::filesystem::path& path) {
  return with_file(path, [](std::istream& is) { return read_hypnogram_csv(is); });
}

void write_events_csv(std::ostream& os, const std::vector<EventInterval>& events) {
  os << "onset_sec,duration_sec,kind\n";
  for (const EventInterval& e : events) {
    os << format_seconds(e.onset) << ',' << format_seconds(e.duration) << ',' << event_kind_name(e.kind) << '\n';
  }
}

std::vector<EventInterval> read_events_csv(std::istream& is) {
  std::vector<EventInterval> events;
  read_rows(is, "onset_sec,duration_sec,kind", [&](const std::vector<std::string>& c, std::size_t line) {
    EventInterval e;
    e.onset = parse_seconds(c[0], line);
    e.duration = parse_seconds(c[1], line);
    const auto kind = event_kind_from_name(c[2]);
    if (!kind) throw ParseError("unknown event kind '" + c[2] + "'", line);
    if (e.onset < 0.0 || !(e.duration > 0.0)) throw ParseError("event needs onset >= 0 and duration > 0", line);
    e.kind = *kind;
    events.push_back(e);
  });
  return events;
}

void write_events_csv(const std::filesystem::path& path, const std::vector<EventInterval>& events) {
  to_file(path, [&](std::ostream& os) { write_events_csv(os, events); });
}

std::vector<EventInterval> read_events_csv(const std::filesystem::path& path) {
  return with_file(path, [](std::istream& is) { return read_events_csv(is); });
}

}  // namespace anysleep::io
