#pragma once

// Shared helpers for the test suites: independent naive oracles and small
// generators. These implementations deliberately share no code with the
// library paths they check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "pcta/rng.hpp"
#include "pcta/tensor.hpp"

namespace pcta::test {

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Values with |v| in [0.2, 1): keeps every ReLU kink far from test points.
inline Tensor random_kink_safe(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    const double mag = rng.uniform(0.2, 1.0);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return t;
}

/// Naive matrix-vector product, index arithmetic written out longhand.
inline Tensor naive_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += w.data[o * in + i] * x.data[i];
    y.data[o] = acc + b.data[o];
  }
  return y;
}

/// Six-nested-loop valid cross-correlation.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
  const std::size_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
  const std::size_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor y({co, oh, ow});
  for (std::size_t f = 0; f < co; ++f) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = b.data[f];
        for (std::size_t ch = 0; ch < ci; ++ch) {
          for (std::size_t p = 0; p < kh; ++p) {
            for (std::size_t q = 0; q < kw; ++q) {
              acc += x.data[(ch * h + r + p) * w + c + q] *
                     k.data[((f * ci + ch) * kh + p) * kw + q];
            }
          }
        }
        y.data[(f * oh + r) * ow + c] = acc;
      }
    }
  }
  return y;
}

/// Brute-force max over each pooling window.
inline double window_max(const Tensor& x, std::size_t ch, std::size_t r0, std::size_t c0,
                         std::size_t size) {
  const std::size_t h = x.shape[1], w = x.shape[2];
  double best = -1e300;
  for (std::size_t p = 0; p < size; ++p) {
    for (std::size_t q = 0; q < size; ++q) {
      best = std::max(best, x.data[(ch * h + r0 + p) * w + c0 + q]);
    }
  }
  return best;
}

/// Independent central difference, step 1e-5.
inline double central_diff(double& slot, const std::function<double()>& f, double step = 1e-5) {
  const double saved = slot;
  slot = saved + step;
  const double up = f();
  slot = saved - step;
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * step);
}

/// |a-b| relative to the larger magnitude with a small absolute floor.
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-3});
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.data[i] != b.data[i]) return false;
  }
  return true;
}

}  // namespace pcta::test
