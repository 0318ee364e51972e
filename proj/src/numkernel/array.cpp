#include "anysleep/numkernel/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "anysleep/core/errors.hpp"

namespace anysleep::nk {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw DimensionError("Array: shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(values_.size()) + " values");
  }
}

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Array::matrix: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Array({r, c}, std::move(v));
}

double Array::item() const {
  if (values_.size() != 1) throw DimensionError("Array::item: array is not a scalar");
  return values_[0];
}

void Array::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw DimensionError("Array::reshaped: cannot view " + shape_string(shape_) + " as " +
                         shape_string(shape));
  }
  return Array(std::move(shape), values_);
}

bool Array::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void axpy(Array& a, const Array& b, double scale) {
  if (a.shape() != b.shape()) {
    throw DimensionError("axpy: shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) pa[i] += scale * pb[i];
}

double max_abs_diff(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace anysleep::nk
