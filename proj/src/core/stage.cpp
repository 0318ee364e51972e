#include "anysleep/core/stage.hpp"

namespace anysleep {

std::string_view stage_code(Stage s) {
  switch (s) {
    case Stage::Wake: return "W";
    case Stage::N1: return "N1";
    case Stage::N2: return "N2";
    case Stage::N3: return "N3";
    case Stage::REM: return "R";
    case Stage::Excluded: return "EXC";
  }
  return "EXC";
}

std::optional<Stage> stage_from_code(std::string_view code) {
  if (code == "W") return Stage::Wake;
  if (code == "N1") return Stage::N1;
  if (code == "N2") return Stage::N2;
  if (code == "N3") return Stage::N3;
  if (code == "R") return Stage::REM;
  if (code == "EXC") return Stage::Excluded;
  return std::nullopt;
}

}  // namespace anysleep
