#include "anysleep/numkernel/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "anysleep/core/errors.hpp"

namespace anysleep::nk {

namespace {

using Index = std::ptrdiff_t;

thread_local BranchRecorder* active_recorder = nullptr;

void note_branch(std::uint64_t v) {
  if (active_recorder != nullptr) active_recorder->mix(v);
}

// Output columns are processed in tiles so the accumulators of one tile stay
// in L1 while every (input channel, tap) pair streams over them.
constexpr Index kTile = 512;

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(x.shape()));
  }
}

struct ConvGeometry {
  Index cin, cout, k, t_in, t_out, stride, pad_left;
};

void conv_forward(const ConvGeometry& g, const double* x, const double* w, const double* b, double* y) {
  for (Index co = 0; co < g.cout; ++co) std::fill_n(y + co * g.t_out, g.t_out, b[co]);
  if (g.stride == 1) {
    for (Index t0 = 0; t0 < g.t_out; t0 += kTile) {
      const Index t1 = std::min(g.t_out, t0 + kTile);
      for (Index co = 0; co < g.cout; ++co) {
        double* yr = y + co * g.t_out;
        for (Index ci = 0; ci < g.cin; ++ci) {
          const double* xr = x + ci * g.t_in;
          const double* wr = w + (co * g.cin + ci) * g.k;
          for (Index kk = 0; kk < g.k; ++kk) {
            const double wv = wr[kk];
            const Index off = kk - g.pad_left;
            const Index lo = std::max(t0, -off);
            const Index hi = std::min(t1, g.t_in - off);
            for (Index t = lo; t < hi; ++t) yr[t] += wv * xr[t + off];
          }
        }
      }
    }
    return;
  }
  for (Index co = 0; co < g.cout; ++co) {
    double* yr = y + co * g.t_out;
    for (Index ci = 0; ci < g.cin; ++ci) {
      const double* xr = x + ci * g.t_in;
      const double* wr = w + (co * g.cin + ci) * g.k;
      for (Index t = 0; t < g.t_out; ++t) {
        const Index base = t * g.stride - g.pad_left;
        const Index k_lo = std::max<Index>(0, -base);
        const Index k_hi = std::min(g.k, g.t_in - base);
        double acc = 0.0;
        for (Index kk = k_lo; kk < k_hi; ++kk) acc += wr[kk] * xr[base + kk];
        yr[t] += acc;
      }
    }
  }
}

void conv_backward(const ConvGeometry& g, const double* x, const double* w, const double* gy, double* gx,
                   double* gw, double* gb) {
  if (gb) {
    for (Index co = 0; co < g.cout; ++co) {
      const double* gyr = gy + co * g.t_out;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (Index t = 0; t < g.t_out; ++t) acc += gyr[t];
      gb[co] += acc;
    }
  }
  if (g.stride == 1) {
    if (gw) {
      for (Index co = 0; co < g.cout; ++co) {
        const double* gyr = gy + co * g.t_out;
        for (Index ci = 0; ci < g.cin; ++ci) {
          const double* xr = x + ci * g.t_in;
          double* gwr = gw + (co * g.cin + ci) * g.k;
          for (Index kk = 0; kk < g.k; ++kk) {
            const Index off = kk - g.pad_left;
            const Index lo = std::max<Index>(0, -off);
            const Index hi = std::min(g.t_out, g.t_in - off);
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (Index t = lo; t < hi; ++t) acc += gyr[t] * xr[t + off];
            gwr[kk] += acc;
          }
        }
      }
    }
    if (gx) {
      for (Index t0 = 0; t0 < g.t_out; t0 += kTile) {
        const Index t1 = std::min(g.t_out, t0 + kTile);
        for (Index ci = 0; ci < g.cin; ++ci) {
          double* gxr = gx + ci * g.t_in;
          for (Index co = 0; co < g.cout; ++co) {
            const double* gyr = gy + co * g.t_out;
            const double* wr = w + (co * g.cin + ci) * g.k;
            for (Index kk = 0; kk < g.k; ++kk) {
              const double wv = wr[kk];
              const Index off = kk - g.pad_left;
              const Index lo = std::max(t0, -off);
              const Index hi = std::min(t1, g.t_in - off);
              for (Index t = lo; t < hi; ++t) gxr[t + off] += wv * gyr[t];
            }
          }
        }
      }
    }
    return;
  }
  for (Index co = 0; co < g.cout; ++co) {
    const double* gyr = gy + co * g.t_out;
    for (Index ci = 0; ci < g.cin; ++ci) {
      const double* xr = x + ci * g.t_in;
      const double* wr = w + (co * g.cin + ci) * g.k;
      double* gxr = gx ? gx + ci * g.t_in : nullptr;
      double* gwr = gw ? gw + (co * g.cin + ci) * g.k : nullptr;
      for (Index t = 0; t < g.t_out; ++t) {
        const double gv = gyr[t];
        const Index base = t * g.stride - g.pad_left;
        const Index k_lo = std::max<Index>(0, -base);
        const Index k_hi = std::min(g.k, g.t_in - base);
        for (Index kk = k_lo; kk < k_hi; ++kk) {
          if (gwr) gwr[kk] += gv * xr[base + kk];
          if (gxr) gxr[base + kk] += gv * wr[kk];
        }
      }
    }
  }
}

}  // namespace

std::size_t conv1d_output_length(std::size_t t, std::size_t k, std::size_t stride, Padding padding) {
  const std::size_t pad_total = padding == Padding::Same ? k - 1 : 0;
  if (stride == 0) throw DimensionError("conv1d: stride must be >= 1");
  if (k == 0 || k > t + pad_total) {
    throw DimensionError("conv1d: kernel " + std::to_string(k) + " longer than padded input " +
                         std::to_string(t + pad_total));
  }
  return (t + pad_total - k) / stride + 1;
}

Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride, Padding padding) {
  require_rank(x, 2, "conv1d");
  require_rank(w, 3, "conv1d");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (ws[1] != xs[0]) {
    throw DimensionError("conv1d: input has " + std::to_string(xs[0]) + " channels, kernels expect " +
                         std::to_string(ws[1]));
  }
  if (b.value().size() != ws[0]) throw DimensionError("conv1d: bias size does not match Cout");
  const std::size_t t_out = conv1d_output_length(xs[1], ws[2], stride, padding);
  const ConvGeometry g{static_cast<Index>(xs[0]),
                       static_cast<Index>(ws[0]),
                       static_cast<Index>(ws[2]),
                       static_cast<Index>(xs[1]),
                       static_cast<Index>(t_out),
                       static_cast<Index>(stride),
                       padding == Padding::Same ? static_cast<Index>((ws[2] - 1) / 2) : 0};
  Array y({ws[0], t_out});
  conv_forward(g, x.value().data(), w.value().data(), b.value().data(), y.data());
  return make_node(std::move(y), {x, w, b}, [g](Node& self) {
    Node& xn = self.parent(0);
    Node& wn = self.parent(1);
    Node& bn = self.parent(2);
    conv_backward(g, xn.value().data(), wn.value().data(), self.grad().data(),
                  xn.requires_grad() ? xn.grad_buffer().data() : nullptr,
                  wn.requires_grad() ? wn.grad_buffer().data() : nullptr,
                  bn.requires_grad() ? bn.grad_buffer().data() : nullptr);
  });
}

BatchNormStats BatchNormStats::identity(std::size_t features) {
  return {Array({features}, 0.0), Array({features}, 1.0)};
}

std::vector<Var> batch_norm(std::span<const Var> inputs, const Var& gamma, const Var& beta, NormMode mode,
                            BatchNormStats* stats, const BatchNormOptions& opts) {
  if (inputs.empty()) throw DimensionError("batch_norm: no inputs");
  const std::size_t f = inputs[0].shape().at(0);
  std::size_t total = 0;
  for (const Var& x : inputs) {
    require_rank(x, 2, "batch_norm");
    if (x.shape()[0] != f) throw DimensionError("batch_norm: feature count differs across inputs");
    total += x.shape()[1];
  }
  if (gamma.value().size() != f || beta.value().size() != f) {
    throw DimensionError("batch_norm: gamma/beta must have " + std::to_string(f) + " entries");
  }
  const double* gm = gamma.value().data();
  const double* bt = beta.value().data();

  if (mode == NormMode::Eval) {
    if (!stats) throw Error("batch_norm: eval mode needs running statistics");
    std::vector<double> inv_std(f);
    for (std::size_t i = 0; i < f; ++i) inv_std[i] = 1.0 / std::sqrt(stats->running_var[i] + opts.eps);
    const std::vector<double> mean(stats->running_mean.values().begin(), stats->running_mean.values().end());
    std::vector<Var> out;
    out.reserve(inputs.size());
    for (const Var& x : inputs) {
      const std::size_t t = x.shape()[1];
      Array y(x.shape());
      for (std::size_t r = 0; r < f; ++r) {
        const double a = gm[r] * inv_std[r];
        const double c = bt[r] - a * mean[r];
        const double* xr = x.value().data() + r * t;
        double* yr = y.data() + r * t;
        for (std::size_t j = 0; j < t; ++j) yr[j] = a * xr[j] + c;
      }
      out.push_back(make_node(std::move(y), {x, gamma, beta}, [f, t, inv_std, mean](Node& self) {
        Node& xn = self.parent(0);
        Node& gn = self.parent(1);
        Node& bn = self.parent(2);
        const double* gy = self.grad().data();
        const double* xv = xn.value().data();
        const double* gmv = gn.value().data();
        for (std::size_t r = 0; r < f; ++r) {
          const double* gyr = gy + r * t;
          if (xn.requires_grad()) {
            double* gx = xn.grad_buffer().data() + r * t;
            const double a = gmv[r] * inv_std[r];
            for (std::size_t j = 0; j < t; ++j) gx[j] += a * gyr[j];
          }
          if (gn.requires_grad() || bn.requires_grad()) {
            double sg = 0.0, sgx = 0.0;
            const double* xr = xv + r * t;
            for (std::size_t j = 0; j < t; ++j) {
              sg += gyr[j];
              sgx += gyr[j] * (xr[j] - mean[r]) * inv_std[r];
            }
            if (gn.requires_grad()) gn.grad_buffer()[r] += sgx;
            if (bn.requires_grad()) bn.grad_buffer()[r] += sg;
          }
        }
      }));
    }
    return out;
  }

  if (total < 2) {
    throw NumericError("batch_norm: degenerate batch, train mode needs at least 2 values per feature");
  }
  std::vector<double> mean(f, 0.0), var(f, 0.0), inv_std(f);
  for (const Var& x : inputs) {
    const std::size_t t = x.shape()[1];
    for (std::size_t r = 0; r < f; ++r) {
      const double* xr = x.value().data() + r * t;
      double s = 0.0;
      for (std::size_t j = 0; j < t; ++j) s += xr[j];
      mean[r] += s;
    }
  }
  for (double& m : mean) m /= static_cast<double>(total);
  for (const Var& x : inputs) {
    const std::size_t t = x.shape()[1];
    for (std::size_t r = 0; r < f; ++r) {
      const double* xr = x.value().data() + r * t;
      double s = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        const double d = xr[j] - mean[r];
        s += d * d;
      }
      var[r] += s;
    }
  }
  for (std::size_t r = 0; r < f; ++r) {
    var[r] /= static_cast<double>(total);
    inv_std[r] = 1.0 / std::sqrt(var[r] + opts.eps);
  }
  if (stats) {
    const double unbias = static_cast<double>(total) / static_cast<double>(total - 1);
    for (std::size_t r = 0; r < f; ++r) {
      stats->running_mean[r] = (1.0 - opts.momentum) * stats->running_mean[r] + opts.momentum * mean[r];
      stats->running_var[r] = (1.0 - opts.momentum) * stats->running_var[r] + opts.momentum * var[r] * unbias;
    }
  }

  // The whole group is one joint node laid out [F, sum T_k]; each returned
  // output is a column slice of it. Slices run their backward before the
  // joint node, so the joint sees the complete upstream gradient.
  Array joint({f, total});
  std::vector<std::size_t> offsets;
  {
    std::size_t off = 0;
    for (const Var& x : inputs) {
      const std::size_t t = x.shape()[1];
      offsets.push_back(off);
      for (std::size_t r = 0; r < f; ++r) {
        const double* xr = x.value().data() + r * t;
        double* yr = joint.data() + r * total + off;
        for (std::size_t j = 0; j < t; ++j) yr[j] = gm[r] * (xr[j] - mean[r]) * inv_std[r] + bt[r];
      }
      off += t;
    }
  }
  std::vector<Var> parents(inputs.begin(), inputs.end());
  parents.push_back(gamma);
  parents.push_back(beta);
  const std::size_t n_in = inputs.size();
  Var joint_var = make_node(std::move(joint), std::move(parents), [=](Node& self) {
    const double* gy = self.grad().data();
    Node& gn = self.parent(n_in);
    Node& bn = self.parent(n_in + 1);
    const double* gmv = gn.value().data();
    const double n = static_cast<double>(total);
    for (std::size_t r = 0; r < f; ++r) {
      const double* gyr = gy + r * total;
      double sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) {
        const Node& xn = self.parent(i);
        const std::size_t t = xn.value().dim(1);
        const double* xr = xn.value().data() + r * t;
        const double* g = gyr + offsets[i];
        for (std::size_t j = 0; j < t; ++j) {
          sg += g[j];
          sgx += g[j] * (xr[j] - mean[r]) * inv_std[r];
        }
      }
      if (gn.requires_grad()) gn.grad_buffer()[r] += sgx;
      if (bn.requires_grad()) bn.grad_buffer()[r] += sg;
      const double mg = sg / n;
      const double mgx = sgx / n;
      const double a = gmv[r] * inv_std[r];
      for (std::size_t i = 0; i < n_in; ++i) {
        Node& xn = self.parent(i);
        if (!xn.requires_grad()) continue;
        const std::size_t t = xn.value().dim(1);
        const double* xr = xn.value().data() + r * t;
        double* gx = xn.grad_buffer().data() + r * t;
        const double* g = gyr + offsets[i];
        for (std::size_t j = 0; j < t; ++j) {
          const double xhat = (xr[j] - mean[r]) * inv_std[r];
          gx[j] += a * (g[j] - mg - xhat * mgx);
        }
      }
    }
  });

  std::vector<Var> out;
  out.reserve(n_in);
  for (std::size_t i = 0; i < n_in; ++i) {
    const std::size_t t = inputs[i].shape()[1];
    const std::size_t off = offsets[i];
    Array y({f, t});
    for (std::size_t r = 0; r < f; ++r) {
      std::copy_n(joint_var.value().data() + r * total + off, t, y.data() + r * t);
    }
    out.push_back(make_node(std::move(y), {joint_var}, [f, t, off, total](Node& self) {
      double* gj = self.parent(0).grad_buffer().data();
      const double* gy = self.grad().data();
      for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t j = 0; j < t; ++j) gj[r * total + off + j] += gy[r * t + j];
      }
    }));
  }
  return out;
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, NormMode mode, BatchNormStats* stats,
               const BatchNormOptions& opts) {
  const Var in[] = {x};
  return batch_norm(std::span<const Var>(in), gamma, beta, mode, stats, opts).front();
}

Var activation(const Var& x, Activation kind) {
  const Array& xv = x.value();
  Array y(xv.shape());
  const std::size_t n = xv.size();
  if (kind == Activation::ELU) {
    for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] >= 0.0 ? xv[i] : std::expm1(xv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (active_recorder != nullptr) {
      for (std::size_t i = 0; i < n; ++i) note_branch(xv[i] > 0.0 ? 2 * i + 1 : 2 * i);
    }
  }
  return make_node(std::move(y), {x}, [kind](Node& self) {
    Node& xn = self.parent(0);
    const Array& xv = xn.value();
    const Array& yv = self.value();
    const double* gy = self.grad().data();
    double* gx = xn.grad_buffer().data();
    const std::size_t n = xv.size();
    if (kind == Activation::ELU) {
      for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] >= 0.0 ? gy[i] : gy[i] * (yv[i] + 1.0);
    } else {
      for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > 0.0 ? gy[i] : 0.0;
    }
  });
}

Var pool_avg(const Var& x, std::size_t kernel, std::size_t stride) {
  require_rank(x, 2, "pool_avg");
  const std::size_t f = x.shape()[0], t = x.shape()[1];
  if (kernel == 0 || stride == 0) throw DimensionError("pool_avg: kernel and stride must be >= 1");
  if (kernel > t) {
    throw DimensionError("pool_avg: kernel " + std::to_string(kernel) + " exceeds length " + std::to_string(t));
  }
  const std::size_t t_out = (t - kernel) / stride + 1;
  Array y({f, t_out});
  const double inv = 1.0 / static_cast<double>(kernel);
  for (std::size_t r = 0; r < f; ++r) {
    const double* xr = x.value().data() + r * t;
    for (std::size_t o = 0; o < t_out; ++o) {
      const double* w = xr + o * stride;
      // Anchored at the first sample so constant windows are returned exactly.
      double s = 0.0;
      for (std::size_t j = 1; j < kernel; ++j) s += w[j] - w[0];
      y.at(r, o) = w[0] + s * inv;
    }
  }
  return make_node(std::move(y), {x}, [f, t, t_out, kernel, stride, inv](Node& self) {
    double* gx = self.parent(0).grad_buffer().data();
    const double* gy = self.grad().data();
    for (std::size_t r = 0; r < f; ++r) {
      for (std::size_t o = 0; o < t_out; ++o) {
        const double g = gy[r * t_out + o] * inv;
        double* w = gx + r * t + o * stride;
        for (std::size_t j = 0; j < kernel; ++j) w[j] += g;
      }
    }
  });
}

Var pool_max(const Var& x, std::size_t factor) {
  require_rank(x, 2, "pool_max");
  const std::size_t f = x.shape()[0], t = x.shape()[1];
  if (factor == 0 || factor > t) throw DimensionError("pool_max: factor must be in [1, T]");
  const std::size_t t_out = t / factor;
  Array y({f, t_out});
  std::vector<std::uint32_t> arg(f * t_out);
  for (std::size_t r = 0; r < f; ++r) {
    const double* xr = x.value().data() + r * t;
    for (std::size_t o = 0; o < t_out; ++o) {
      std::size_t best = o * factor;
      for (std::size_t j = best + 1; j < (o + 1) * factor; ++j) {
        if (xr[j] > xr[best]) best = j;
      }
      y.at(r, o) = xr[best];
      arg[r * t_out + o] = static_cast<std::uint32_t>(best);
      note_branch(best);
    }
  }
  return make_node(std::move(y), {x}, [f, t, t_out, arg = std::move(arg)](Node& self) {
    double* gx = self.parent(0).grad_buffer().data();
    const double* gy = self.grad().data();
    for (std::size_t r = 0; r < f; ++r) {
      for (std::size_t o = 0; o < t_out; ++o) gx[r * t + arg[r * t_out + o]] += gy[r * t_out + o];
    }
  });
}

Var upsample_nn(const Var& x, std::size_t factor) {
  require_rank(x, 2, "upsample_nn");
  if (factor == 0) throw DimensionError("upsample_nn: factor must be >= 1");
  const std::size_t f = x.shape()[0], t = x.shape()[1];
  Array y({f, t * factor});
  for (std::size_t r = 0; r < f; ++r) {
    const double* xr = x.value().data() + r * t;
    double* yr = y.data() + r * t * factor;
    for (std::size_t i = 0; i < t; ++i) std::fill_n(yr + i * factor, factor, xr[i]);
  }
  return make_node(std::move(y), {x}, [f, t, factor](Node& self) {
    double* gx = self.parent(0).grad_buffer().data();
    const double* gy = self.grad().data();
    for (std::size_t r = 0; r < f; ++r) {
      for (std::size_t i = 0; i < t; ++i) {
        const double* g = gy + (r * t + i) * factor;
        double s = 0.0;
        for (std::size_t j = 0; j < factor; ++j) s += g[j];
        gx[r * t + i] += s;
      }
    }
  });
}

namespace {

void softmax_inplace(const double* x, double* y, std::size_t n) {
  const double m = *std::max_element(x, x + n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  const double inv = 1.0 / s;
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
}

void softmax_backward(const double* y, const double* gy, double* gx, std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - dot);
}

}  // namespace

Var softmax(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("softmax: empty input");
  Array y(x.shape());
  softmax_inplace(x.value().data(), y.data(), n);
  return make_node(std::move(y), {x}, [n](Node& self) {
    softmax_backward(self.value().data(), self.grad().data(), self.parent(0).grad_buffer().data(), n);
  });
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.shape()[0], k = x.shape()[1];
  if (k == 0) throw DimensionError("softmax_rows: empty rows");
  Array y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) softmax_inplace(x.value().data() + r * k, y.data() + r * k, k);
  return make_node(std::move(y), {x}, [rows, k](Node& self) {
    double* gx = self.parent(0).grad_buffer().data();
    for (std::size_t r = 0; r < rows; ++r) {
      softmax_backward(self.value().data() + r * k, self.grad().data() + r * k, gx + r * k, k);
    }
  });
}

Var masked_cross_entropy(const Var& probabilities, std::span<const std::optional<std::size_t>> labels) {
  require_rank(probabilities, 2, "masked_cross_entropy");
  const std::size_t e = probabilities.shape()[0], k = probabilities.shape()[1];
  if (labels.size() != e) {
    throw DimensionError("masked_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(e) + " rows");
  }
  std::size_t count = 0;
  double total = 0.0;
  const double* p = probabilities.value().data();
  for (std::size_t i = 0; i < e; ++i) {
    if (!labels[i]) continue;
    if (*labels[i] >= k) throw DimensionError("masked_cross_entropy: label out of range");
    total -= std::log(std::max(p[i * k + *labels[i]], kProbabilityFloor));
    ++count;
  }
  if (count == 0) throw NumericError("masked_cross_entropy: empty loss, every label is masked");
  const double n = static_cast<double>(count);
  std::vector<std::optional<std::size_t>> lab(labels.begin(), labels.end());
  return make_node(Array::scalar(total / n), {probabilities}, [e, k, n, lab = std::move(lab)](Node& self) {
    Node& pn = self.parent(0);
    const double g = self.grad()[0];
    const double* pv = pn.value().data();
    double* gp = pn.grad_buffer().data();
    for (std::size_t i = 0; i < e; ++i) {
      if (!lab[i]) continue;
      const double v = pv[i * k + *lab[i]];
      if (v > kProbabilityFloor) gp[i * k + *lab[i]] -= g / (n * v);
    }
  });
}

Var concat_features(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("concat_features: no inputs");
  const std::size_t t = xs[0].shape().at(1);
  std::size_t f = 0;
  for (const Var& x : xs) {
    require_rank(x, 2, "concat_features");
    if (x.shape()[1] != t) {
      throw DimensionError("concat_features: time lengths differ (" + std::to_string(t) + " vs " +
                           std::to_string(x.shape()[1]) + ")");
    }
    f += x.shape()[0];
  }
  Array y({f, t});
  std::size_t off = 0;
  for (const Var& x : xs) {
    std::copy_n(x.value().data(), x.value().size(), y.data() + off);
    off += x.value().size();
  }
  return make_node(std::move(y), std::vector<Var>(xs.begin(), xs.end()), [](Node& self) {
    std::size_t off = 0;
    const double* gy = self.grad().data();
    for (std::size_t i = 0; i < self.parents().size(); ++i) {
      Node& xn = self.parent(i);
      const std::size_t n = xn.value().size();
      if (xn.requires_grad()) {
        double* gx = xn.grad_buffer().data();
        for (std::size_t j = 0; j < n; ++j) gx[j] += gy[off + j];
      }
      off += n;
    }
  });
}

Var stack_columns(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("stack_columns: no inputs");
  const std::size_t f = xs[0].value().size();
  const std::size_t c = xs.size();
  Array y({f, c});
  for (std::size_t j = 0; j < c; ++j) {
    if (xs[j].value().size() != f) throw DimensionError("stack_columns: inputs differ in length");
    for (std::size_t r = 0; r < f; ++r) y.at(r, j) = xs[j].value()[r];
  }
  return make_node(std::move(y), std::vector<Var>(xs.begin(), xs.end()), [f, c](Node& self) {
    const double* gy = self.grad().data();
    for (std::size_t j = 0; j < c; ++j) {
      Node& xn = self.parent(j);
      if (!xn.requires_grad()) continue;
      double* gx = xn.grad_buffer().data();
      for (std::size_t r = 0; r < f; ++r) gx[r] += gy[r * c + j];
    }
  });
}

Var time_mean(const Var& x) {
  require_rank(x, 2, "time_mean");
  const std::size_t f = x.shape()[0], t = x.shape()[1];
  if (t == 0) throw DimensionError("time_mean: empty time axis");
  Array y({f});
  const double inv = 1.0 / static_cast<double>(t);
  for (std::size_t r = 0; r < f; ++r) {
    const double* xr = x.value().data() + r * t;
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += xr[j];
    y[r] = s * inv;
  }
  return make_node(std::move(y), {x}, [f, t, inv](Node& self) {
    double* gx = self.parent(0).grad_buffer().data();
    const double* gy = self.grad().data();
    for (std::size_t r = 0; r < f; ++r) {
      const double g = gy[r] * inv;
      for (std::size_t j = 0; j < t; ++j) gx[r * t + j] += g;
    }
  });
}

Var linear(const Var& w, const Var& x, const Var& b) {
  require_rank(w, 2, "linear");
  require_rank(x, 2, "linear");
  const std::size_t o = w.shape()[0], in = w.shape()[1], n = x.shape()[1];
  if (x.shape()[0] != in) {
    throw DimensionError("linear: weight expects " + std::to_string(in) + " inputs, got " +
                         std::to_string(x.shape()[0]));
  }
  if (b.value().size() != o) throw DimensionError("linear: bias size does not match outputs");
  Array y({o, n});
  const double* wv = w.value().data();
  const double* xv = x.value().data();
  for (std::size_t r = 0; r < o; ++r) {
    double* yr = y.data() + r * n;
    std::fill_n(yr, n, b.value()[r]);
    for (std::size_t i = 0; i < in; ++i) {
      const double a = wv[r * in + i];
      const double* xr = xv + i * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += a * xr[j];
    }
  }
  return make_node(std::move(y), {w, x, b}, [o, in, n](Node& self) {
    Node& wn = self.parent(0);
    Node& xn = self.parent(1);
    Node& bn = self.parent(2);
    const double* gy = self.grad().data();
    const double* wv = wn.value().data();
    const double* xv = xn.value().data();
    for (std::size_t r = 0; r < o; ++r) {
      const double* gyr = gy + r * n;
      if (bn.requires_grad()) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += gyr[j];
        bn.grad_buffer()[r] += s;
      }
      for (std::size_t i = 0; i < in; ++i) {
        const double* xr = xv + i * n;
        if (wn.requires_grad()) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gyr[j] * xr[j];
          wn.grad_buffer()[r * in + i] += s;
        }
        if (xn.requires_grad()) {
          double* gx = xn.grad_buffer().data() + i * n;
          const double a = wv[r * in + i];
          for (std::size_t j = 0; j < n; ++j) gx[j] += a * gyr[j];
        }
      }
    }
  });
}

Var transpose(const Var& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Array y({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y.at(j, i) = x.value().at(i, j);
  }
  return make_node(std::move(y), {x}, [r, c](Node& self) {
    Array& gx = self.parent(0).grad_buffer();
    const Array& gy = self.grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += gy.at(j, i);
    }
  });
}

Var weighted_sum(std::span<const Var> maps, const Var& w) {
  const std::size_t c = maps.size();
  if (c == 0) throw DimensionError("weighted_sum: no maps");
  if (w.value().size() != c) throw DimensionError("weighted_sum: weight count does not match map count");
  const Shape& shape = maps[0].shape();
  for (const Var& m : maps) {
    if (m.shape() != shape) throw DimensionError("weighted_sum: map shapes differ");
  }
  Array y(shape, 0.0);
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < c; ++i) {
    const double wi = w.value()[i];
    const double* m = maps[i].value().data();
    for (std::size_t j = 0; j < n; ++j) y[j] += wi * m[j];
  }
  std::vector<Var> parents(maps.begin(), maps.end());
  parents.push_back(w);
  return make_node(std::move(y), std::move(parents), [c, n](Node& self) {
    const double* gy = self.grad().data();
    Node& wn = self.parent(c);
    for (std::size_t i = 0; i < c; ++i) {
      Node& mn = self.parent(i);
      const double* m = mn.value().data();
      if (wn.requires_grad()) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += gy[j] * m[j];
        wn.grad_buffer()[i] += s;
      }
      if (mn.requires_grad()) {
        const double wi = wn.value()[i];
        double* gm = mn.grad_buffer().data();
        for (std::size_t j = 0; j < n; ++j) gm[j] += wi * gy[j];
      }
    }
  });
}

Var add(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("add: no inputs");
  Array y(xs[0].shape(), 0.0);
  for (const Var& x : xs) axpy(y, x.value());
  return make_node(std::move(y), std::vector<Var>(xs.begin(), xs.end()), [](Node& self) {
    for (std::size_t i = 0; i < self.parents().size(); ++i) {
      Node& xn = self.parent(i);
      if (xn.requires_grad()) axpy(xn.grad_buffer(), self.grad());
    }
  });
}

Var scale(const Var& x, double factor) {
  Array y = x.value();
  for (double& v : y.values()) v *= factor;
  return make_node(std::move(y), {x}, [factor](Node& self) {
    axpy(self.parent(0).grad_buffer(), self.grad(), factor);
  });
}

Var contract(const Var& x, const Array& coeffs) {
  if (coeffs.size() != x.value().size()) throw DimensionError("contract: coefficient count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * x.value()[i];
  return make_node(Array::scalar(s), {x}, [coeffs](Node& self) {
    const double g = self.grad()[0];
    double* gx = self.parent(0).grad_buffer().data();
    for (std::size_t i = 0; i < coeffs.size(); ++i) gx[i] += g * coeffs[i];
  });
}

BranchRecorder::BranchRecorder() : previous_(active_recorder) { active_recorder = this; }

BranchRecorder::~BranchRecorder() { active_recorder = previous_; }

void BranchRecorder::mix(std::uint64_t v) noexcept {
  for (int i = 0; i < 8; ++i) {
    digest_ ^= (v >> (8 * i)) & 0xFF;
    digest_ *= 0x100000001b3ULL;
  }
}

}  // namespace anysleep::nk
