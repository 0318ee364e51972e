#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "anysleep/numkernel/autodiff.hpp"

namespace anysleep::nk {

using ScalarFunction = std::function<Var(std::span<const Var>)>;

struct GradCheckOptions {
  // Coordinates checked per input array; 0 checks every coordinate. When
  // limited, coordinates are drawn with `seed`.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  // Gradients smaller than this are compared in absolute terms.
  double floor = 1e-6;
  // Skip coordinates whose +-h probes switch a max-pool winner or a ReLU sign,
  // where central differences straddle a kink. Skips are counted in the report.
  bool skip_branch_changes = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;
};

// Compares the reverse-mode gradient of `f` at `point` with central
// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. The relative
// error of one coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Array>& point, double h,
                           const GradCheckOptions& options = {});

}  // namespace anysleep::nk
