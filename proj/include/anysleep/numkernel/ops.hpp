#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "anysleep/numkernel/autodiff.hpp"

namespace anysleep::nk {

enum class Padding { Same, Valid };

// 1-D cross-correlation. x [Cin, T], w [Cout, Cin, K], b [Cout] -> [Cout, T'].
// Same padding puts floor((K-1)/2) zeros on the left and the rest on the
// right; T' = floor((T + pad_total - K) / stride) + 1.
Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1,
           Padding padding = Padding::Same);
std::size_t conv1d_output_length(std::size_t t, std::size_t k, std::size_t stride, Padding padding);

enum class NormMode { Train, Eval };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

struct BatchNormStats {
  Array running_mean;  // [F]
  Array running_var;   // [F]
  static BatchNormStats identity(std::size_t features);
};

// Batch normalization over a group of feature-major arrays [F, T_k]: every
// feature is normalized with statistics pooled over all columns of all
// inputs. A single [F, N] array covers the usual [N, F] batch in transposed
// layout. Train mode uses group statistics (biased variance) and, when
// `stats` is given, folds them into the running estimates (unbiased
// variance); eval mode is pointwise with the running estimates.
std::vector<Var> batch_norm(std::span<const Var> inputs, const Var& gamma, const Var& beta,
                            NormMode mode, BatchNormStats* stats, const BatchNormOptions& opts = {});
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, NormMode mode, BatchNormStats* stats,
               const BatchNormOptions& opts = {});

enum class Activation { ELU, ReLU };
Var activation(const Var& x, Activation kind);
inline Var elu(const Var& x) { return activation(x, Activation::ELU); }
inline Var relu(const Var& x) { return activation(x, Activation::ReLU); }

// Mean over windows along time: [F, T] -> [F, floor((T - kernel)/stride) + 1].
Var pool_avg(const Var& x, std::size_t kernel, std::size_t stride);
// Max over non-overlapping windows of `factor` samples; trailing samples that
// do not fill a window are dropped.
Var pool_max(const Var& x, std::size_t factor);
// Nearest-neighbour repeat along time: [F, T] -> [F, T * factor].
Var upsample_nn(const Var& x, std::size_t factor);

// Softmax over all elements (max-subtracted).
Var softmax(const Var& x);
// Row-wise softmax of an [N, K] array.
Var softmax_rows(const Var& x);

// Mean over unmasked rows of -ln p[row, label]. `labels[i]` empty marks a
// masked row. Probabilities below 1e-12 are clamped before the log.
inline constexpr double kProbabilityFloor = 1e-12;
Var masked_cross_entropy(const Var& probabilities, std::span<const std::optional<std::size_t>> labels);

// Concatenate [F_i, T] arrays along the feature axis.
Var concat_features(std::span<const Var> xs);
// Stack C vectors [F] into an [F, C] matrix, one column per input.
Var stack_columns(std::span<const Var> xs);
// [F, T] -> [F]
Var time_mean(const Var& x);
// w [O, I], x [I, N], b [O] -> [O, N]
Var linear(const Var& w, const Var& x, const Var& b);
// 2-D transpose.
Var transpose(const Var& x);
// sum_i w[i] * maps[i]; w holds C weights (any shape of size C). Terms are
// accumulated in input order.
Var weighted_sum(std::span<const Var> maps, const Var& w);
// Elementwise sum of same-shaped arrays.
Var add(std::span<const Var> xs);
Var scale(const Var& x, double factor);
// Scalar sum_i coeffs[i] * x[i]; used to reduce a layer output for gradient checks.
Var contract(const Var& x, const Array& coeffs);

// Digest of the piecewise branches (max-pool winners, ReLU signs) taken on
// this thread while the recorder is alive. Equal digests for two evaluations
// mean both ran through the same smooth piece of the function.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t digest() const noexcept { return digest_; }
  void mix(std::uint64_t v) noexcept;

 private:
  BranchRecorder* previous_;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
};

}  // namespace anysleep::nk
