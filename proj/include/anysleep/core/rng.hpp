#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace anysleep {

// Seedable 64-bit generator (mt19937_64) with portable distribution helpers.
// The std:: distributions are implementation-defined, so bounded integers,
// uniforms and normals are derived here to keep streams identical across
// standard libraries.
//
// Streams: `Rng::stream(master, id)` derives an independent generator for a
// worker, an epoch, or a named purpose by mixing the id into the master seed
// with SplitMix64. Two streams with different ids never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t id);
  static Rng stream(std::uint64_t master, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  std::uint64_t poisson(double mean);
  // Index drawn from a discrete distribution; weights need not be normalized.
  std::size_t categorical(const std::vector<double>& weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace anysleep
