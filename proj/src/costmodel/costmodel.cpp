#include "anysleep/costmodel/costmodel.hpp"

#include "anysleep/core/errors.hpp"

namespace anysleep::cost {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::AnySleep: return "anysleep";
    case Architecture::Early: return "early";
    case Architecture::Late: return "late";
    case Architecture::USleep: return "usleep";
  }
  return "?";
}

Architecture architecture_from_name(std::string_view name) {
  for (Architecture a : {Architecture::AnySleep, Architecture::Early, Architecture::Late, Architecture::USleep}) {
    if (architecture_name(a) == name) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

namespace {

std::uint64_t early_encoders_per_channel(const CostOptions& o) {
  return o.early_encoders == EarlyEncoderCount::PerHead ? o.early_heads : 1;
}

}  // namespace

std::uint64_t steps(Architecture arch, std::uint64_t n_eeg, std::uint64_t n_eog, std::uint64_t depth,
                    const CostOptions& options) {
  const std::uint64_t c = n_eeg + n_eog;
  if (c == 0) throw ConfigError("steps: at least one channel is required");
  if (depth == 0) throw ConfigError("steps: depth must be positive");
  switch (arch) {
    case Architecture::AnySleep: return depth * c + (depth + 1) + depth + 1;
    case Architecture::Early:
      return early_encoders_per_channel(options) * c + options.early_heads + depth + depth + 1;
    case Architecture::Late: return (2 * depth + 1) * c + 1 + 1;
    case Architecture::USleep:
      if (n_eeg == 0 || n_eog == 0) {
        throw ConfigError("steps: the pairwise protocol needs at least one EEG and one EOG channel");
      }
      return (2 * depth + 1) * n_eeg * n_eog;
  }
  throw ConfigError("steps: unknown architecture");
}

std::uint64_t per_channel_slope(Architecture arch, std::uint64_t depth, const CostOptions& options) {
  switch (arch) {
    case Architecture::AnySleep: return depth;
    case Architecture::Early: return early_encoders_per_channel(options);
    case Architecture::Late: return 2 * depth + 1;
    case Architecture::USleep: break;
  }
  throw ConfigError("per_channel_slope: the pairwise protocol is not linear in the channel count");
}

std::vector<CostRow> scaling_table(std::uint64_t max_eeg, std::uint64_t depth, const CostOptions& options) {
  if (max_eeg == 0) throw ConfigError("scaling_table: max channels must be positive");
  std::vector<CostRow> rows;
  for (Architecture a : {Architecture::AnySleep, Architecture::Early, Architecture::Late, Architecture::USleep}) {
    for (std::uint64_t eog = 0; eog <= 2; ++eog) {
      if (a == Architecture::USleep && eog == 0) continue;
      for (std::uint64_t eeg = 1; eeg <= max_eeg; ++eeg) rows.push_back({a, eeg, eog, steps(a, eeg, eog, depth, options)});
    }
  }
  return rows;
}

std::string scaling_csv(const std::vector<CostRow>& rows) {
  std::string out = "arch,n_eeg,n_eog,steps\n";
  for (const CostRow& r : rows) {
    out += std::string(architecture_name(r.arch)) + ',' + std::to_string(r.n_eeg) + ',' + std::to_string(r.n_eog) +
           ',' + std::to_string(r.steps) + '\n';
  }
  return out;
}

}  // namespace anysleep::cost
