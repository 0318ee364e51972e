#include "anysleep/numkernel/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anysleep/numkernel/ops.hpp"

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"

namespace anysleep::nk {

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Array>& point, std::uint64_t* branches = nullptr) {
  NoGradGuard guard;
  BranchRecorder recorder;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Array& a : point) vars.push_back(leaf(a, false));
  const double value = f(vars).value().item();
  if (branches != nullptr) *branches = recorder.digest();
  return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Array>& point, double h,
                           const GradCheckOptions& options) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step must be positive");

  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Array& a : point) vars.push_back(leaf(a, true));
  const Var out = f(vars);
  backward(out);

  GradCheckReport report;
  std::uint64_t base_branches = 0;
  if (options.skip_branch_changes) evaluate(f, point, &base_branches);
  Rng rng = Rng::stream(options.seed, "grad_check");
  std::vector<Array> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const Array analytic = vars[i].grad().shape() == point[i].shape() ? vars[i].grad() : Array(point[i].shape(), 0.0);
    std::vector<std::size_t> coords(point[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input != 0 && coords.size() > options.max_coords_per_input) {
      // Partial Fisher-Yates: the first k entries become a uniform subset.
      for (std::size_t j = 0; j < options.max_coords_per_input; ++j) {
        std::swap(coords[j], coords[j + rng.below(coords.size() - j)]);
      }
      coords.resize(options.max_coords_per_input);
    }
    for (std::size_t c : coords) {
      const double x0 = point[i][c];
      std::uint64_t plus_branches = 0, minus_branches = 0;
      probe[i][c] = x0 + h;
      const double fp = evaluate(f, probe, &plus_branches);
      probe[i][c] = x0 - h;
      const double fm = evaluate(f, probe, &minus_branches);
      probe[i][c] = x0;
      if (options.skip_branch_changes && (plus_branches != base_branches || minus_branches != base_branches)) {
        ++report.coords_skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.coords_checked == 1) {
        report.max_rel_error = rel;
        report.worst_input = i;
        report.worst_coord = c;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

}  // namespace anysleep::nk
