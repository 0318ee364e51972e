#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace anysleep::cost {

enum class Architecture { AnySleep, Early, Late, USleep };

std::string_view architecture_name(Architecture a);
Architecture architecture_from_name(std::string_view name);  // ConfigError on unknown names

// How the early-fusion variant's channel encoders are counted: once per
// attention head per channel (the default, matching the implemented model)
// or once per channel.
enum class EarlyEncoderCount { PerHead, Shared };

struct CostOptions {
  EarlyEncoderCount early_encoders = EarlyEncoderCount::PerHead;
  std::uint64_t early_heads = 4;
};

// Whole-component evaluations for one forward pass over C = n_eeg + n_eog
// channels of a depth-D network:
//   AnySleep (mid fusion): D*C encoder blocks + (D+1) attention modules
//                          + D decoder blocks + 1 classifier
//   Early:                 h*C channel encoders + h attention heads
//                          + D encoder blocks + D decoder blocks + 1
//   Late:                  (2D+1)*C per-channel U-Nets + 1 attention + 1
//   USleep:                (2D+1) per (EEG, EOG) pair
// ConfigError when no channel is given, or for USleep without an EEG or an
// EOG channel (the model takes exactly one of each).
std::uint64_t steps(Architecture arch, std::uint64_t n_eeg, std::uint64_t n_eog, std::uint64_t depth,
                    const CostOptions& options = {});

// Increase in steps() per added channel for the architectures linear in C.
std::uint64_t per_channel_slope(Architecture arch, std::uint64_t depth, const CostOptions& options = {});

struct CostRow {
  Architecture arch;
  std::uint64_t n_eeg = 0;
  std::uint64_t n_eog = 0;
  std::uint64_t steps = 0;
};

// Rows for every architecture, n_eog in {0, 1, 2} and n_eeg in 1..max_eeg,
// ordered by architecture, n_eog, n_eeg. USleep rows without EOG are left out.
std::vector<CostRow> scaling_table(std::uint64_t max_eeg, std::uint64_t depth, const CostOptions& options = {});

// "arch,n_eeg,n_eog,steps" with one line per row.
std::string scaling_csv(const std::vector<CostRow>& rows);

}  // namespace anysleep::cost
