#include "anysleep/numkernel/optim.hpp"

#include <cmath>

#include "anysleep/core/errors.hpp"

namespace anysleep::nk {

void AmsGrad::step(ParameterSet& params, const std::vector<Array>& grads) {
  if (grads.size() != params.size()) {
    throw DimensionError("AmsGrad: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params.value(i).shape()) {
      throw DimensionError("AmsGrad: gradient shape mismatch for '" + params.name(i) + "'");
    }
    if (!grads[i].all_finite()) {
      throw OptimizerError(params.name(i), "AmsGrad: non-finite gradient for '" + params.name(i) + "'");
    }
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.value(i).shape(), 0.0);
      v_.emplace_back(params.value(i).shape(), 0.0);
      v_max_.emplace_back(params.value(i).shape(), 0.0);
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params.value(i).data();
    const double* g = grads[i].data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* vmax = v_max_[i].data();
    const std::size_t n = grads[i].size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      if (v_hat > vmax[j]) vmax[j] = v_hat;
      theta[j] -= config_.lr * m_hat / (std::sqrt(vmax[j]) + config_.eps);
    }
  }
}

void AmsGrad::restore(std::uint64_t t, std::vector<Array> m, std::vector<Array> v, std::vector<Array> v_max) {
  if (m.size() != v.size() || v.size() != v_max.size()) throw DimensionError("AmsGrad::restore: size mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
  v_max_ = std::move(v_max);
}

}  // namespace anysleep::nk
