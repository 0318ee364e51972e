#pragma once

#include <cstdint>
#include <vector>

#include "anysleep/numkernel/params.hpp"

namespace anysleep::nk {

struct AmsGradConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with the AMSGrad correction. Moments are bias-corrected first; the
// running maximum is taken over the corrected second moment and used in the
// denominator:
//   m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t)
//   v_max = max(v_max, v_hat)
//   theta -= lr * m_hat / (sqrt(v_max) + eps)
class AmsGrad {
 public:
  explicit AmsGrad(AmsGradConfig config = {}) : config_(config) {}

  // Throws OptimizerError naming the parameter when a gradient is not finite;
  // in that case no parameter is modified.
  void step(ParameterSet& params, const std::vector<Array>& grads);

  const AmsGradConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<Array>& first_moment() const noexcept { return m_; }
  const std::vector<Array>& second_moment() const noexcept { return v_; }
  const std::vector<Array>& max_second_moment() const noexcept { return v_max_; }

  // Restore a saved state (resumed training).
  void restore(std::uint64_t t, std::vector<Array> m, std::vector<Array> v, std::vector<Array> v_max);

 private:
  AmsGradConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Array> m_, v_, v_max_;
};

}  // namespace anysleep::nk
