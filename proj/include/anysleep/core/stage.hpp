#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace anysleep {

// The five scored stages in canonical order (Wake < N1 < N2 < N3 < REM),
// plus Excluded for artifact/unknown epochs that stay in the timeline.
enum class Stage : std::uint8_t { Wake = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4, Excluded = 5 };

inline constexpr std::size_t kNumStages = 5;
inline constexpr std::array<Stage, kNumStages> kScoredStages = {Stage::Wake, Stage::N1, Stage::N2,
                                                               Stage::N3, Stage::REM};

inline constexpr std::size_t kSamplesPerEpoch = 3840;  // 30 s at 128 Hz
inline constexpr double kEpochSeconds = 30.0;
inline constexpr double kModelRateHz = 128.0;

constexpr std::size_t stage_index(Stage s) { return static_cast<std::size_t>(s); }
constexpr bool is_scored(Stage s) { return s != Stage::Excluded; }

// Sidecar spelling: W, N1, N2, N3, R, EXC.
std::string_view stage_code(Stage s);
std::optional<Stage> stage_from_code(std::string_view code);

}  // namespace anysleep
