#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stcd/tensor.hpp"

namespace stcd {

// ---------------------------------------------------------------------------
// conv2d: cross-correlation over [Cin,H,W] with [Cout,Cin,K,K] weights,
// zero padding, square odd kernel. Output [Cout,Ho,Wo].
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void check_conv_args(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b, int stride,
                     int pad) {
  require(x.ndim() == 3, errc::shape_mismatch, "conv2d: input must be [Cin,H,W], got " + x.shape_str());
  require(w.ndim() == 4, errc::shape_mismatch, "conv2d: weights must be [Cout,Cin,K,K], got " + w.shape_str());
  require(w.dim(2) == w.dim(3), errc::shape_mismatch, "conv2d: kernel must be square");
  require(w.dim(2) % 2 == 1, errc::invalid_argument, "conv2d: kernel size must be odd");
  require(stride >= 1, errc::invalid_argument, "conv2d: stride must be >= 1");
  require(pad >= 0, errc::invalid_argument, "conv2d: padding must be >= 0");
  require(x.dim(0) == w.dim(1), errc::shape_mismatch,
          "conv2d: input channels " + std::to_string(x.dim(0)) + " != weight Cin " +
              std::to_string(w.dim(1)));
  if (b) {
    require(b->ndim() == 1 && b->dim(0) == w.dim(0), errc::shape_mismatch,
            "conv2d: bias dim " + b->shape_str() + " != Cout " + std::to_string(w.dim(0)));
  }
  require(conv_out_dim(x.dim(1), w.dim(2), stride, pad) >= 1 &&
              conv_out_dim(x.dim(2), w.dim(2), stride, pad) >= 1,
          errc::shape_mismatch, "conv2d: output would be empty for input " + x.shape_str());
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int stride,
                  int pad) {
  check_conv_args(x, w, &b, stride, pad);
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wd, k, stride, pad);

  TensorT<T> y({cout, ho, wo});
  for (int co = 0; co < cout; ++co) {
    T* ych = &y.at(co, 0, 0);
    const T bias = b[co];
    for (int i = 0; i < ho * wo; ++i) ych[i] = bias;
  }
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      const T* xch = &x.at(ci, 0, 0);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = w.at(co, ci, ky, kx);
          if (wv == T(0)) continue;
          // valid output column range for this kernel tap
          int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
          int ox_hi = std::min(wo - 1, (wd - 1 - kx + pad) / stride);
          if (ox_lo > ox_hi) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            T* yrow = &y.at(co, oy, 0);
            const T* xrow = xch + static_cast<std::size_t>(iy) * wd + (kx - pad);
            if (stride == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += wv * xrow[ox];
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += wv * xrow[ox * stride];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
struct Conv2dGrads {
  TensorT<T> x, w, b;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad,
                               const TensorT<T>& gy) {
  check_conv_args<T>(x, w, nullptr, stride, pad);
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wd, k, stride, pad);
  require(gy.ndim() == 3 && gy.dim(0) == cout && gy.dim(1) == ho && gy.dim(2) == wo,
          errc::shape_mismatch, "conv2d_backward: upstream gradient shape " + gy.shape_str());

  Conv2dGrads<T> g{TensorT<T>(x.shape()), TensorT<T>(w.shape()), TensorT<T>({cout})};

  for (int co = 0; co < cout; ++co) {
    const T* grow = &gy.at(co, 0, 0);
    T s = 0;
    for (int i = 0; i < ho * wo; ++i) s += grow[i];
    g.b[co] = s;
  }

  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      T* gxch = &g.x.at(ci, 0, 0);
      const T* xch = &x.at(ci, 0, 0);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = w.at(co, ci, ky, kx);
          T wacc = 0;
          int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
          int ox_hi = std::min(wo - 1, (wd - 1 - kx + pad) / stride);
          if (ox_lo > ox_hi) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const T* grow = &gy.at(co, oy, 0);
            const std::size_t base = static_cast<std::size_t>(iy) * wd + (kx - pad);
            const T* xrow = xch + base;
            T* gxrow = gxch + base;
            if (stride == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                wacc += grow[ox] * xrow[ox];
                gxrow[ox] += wv * grow[ox];
              }
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                wacc += grow[ox] * xrow[ox * stride];
                gxrow[ox * stride] += wv * grow[ox];
              }
            }
          }
          g.w.at(co, ci, ky, kx) += wacc;
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------

enum class Act { relu, leaky_relu, sigmoid };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::relu: return "relu";
    case Act::leaky_relu: return "leaky_relu";
    case Act::sigmoid: return "sigmoid";
  }
  return "?";
}

template <typename T>
TensorT<T> activate(const TensorT<T>& x, Act kind, T alpha = T(0.1)) {
  if (kind == Act::leaky_relu)
    require(alpha > T(0) && alpha < T(1), errc::invalid_argument,
            "leaky_relu: alpha must lie in (0,1)");
  TensorT<T> y(x.shape());
  const std::int64_t n = x.numel();
  switch (kind) {
    case Act::relu:
      for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case Act::leaky_relu:
      for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : alpha * x[i];
      break;
    case Act::sigmoid:
      for (std::int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
      break;
  }
  return y;
}

// x = pre-activation input, y = activate(x). sigmoid uses y, relu family uses x.
template <typename T>
TensorT<T> activate_backward(const TensorT<T>& x, const TensorT<T>& y, const TensorT<T>& gy,
                             Act kind, T alpha = T(0.1)) {
  require_same_shape(x, gy, "activate_backward");
  TensorT<T> gx(x.shape());
  const std::int64_t n = x.numel();
  switch (kind) {
    case Act::relu:
      for (std::int64_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
      break;
    case Act::leaky_relu:
      for (std::int64_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : alpha * gy[i];
      break;
    case Act::sigmoid:
      for (std::int64_t i = 0; i < n; ++i) gx[i] = gy[i] * y[i] * (T(1) - y[i]);
      break;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// linear: y = W x + b with W [M,N], x [N], b [M].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  require(x.ndim() == 1 && w.ndim() == 2 && b.ndim() == 1, errc::shape_mismatch,
          "linear: expected x[N], w[M,N], b[M]");
  require(w.dim(1) == x.dim(0), errc::shape_mismatch,
          "linear: weight inner dim " + std::to_string(w.dim(1)) + " != input dim " +
              std::to_string(x.dim(0)));
  require(w.dim(0) == b.dim(0), errc::shape_mismatch, "linear: bias dim != output dim");
  const int m = w.dim(0), n = w.dim(1);
  TensorT<T> y({m});
  for (int i = 0; i < m; ++i) {
    T acc = b[i];
    const T* wrow = &w.at(i, 0);
    for (int j = 0; j < n; ++j) acc += wrow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

template <typename T>
struct LinearGrads {
  TensorT<T> x, w, b;
};

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy) {
  const int m = w.dim(0), n = w.dim(1);
  require(gy.ndim() == 1 && gy.dim(0) == m, errc::shape_mismatch, "linear_backward: gy dim");
  LinearGrads<T> g{TensorT<T>(x.shape()), TensorT<T>(w.shape()), TensorT<T>({m})};
  for (int i = 0; i < m; ++i) {
    const T gi = gy[i];
    g.b[i] = gi;
    const T* wrow = &w.at(i, 0);
    T* gwrow = &g.w.at(i, 0);
    for (int j = 0; j < n; ++j) {
      gwrow[j] = gi * x[j];
      g.x[j] += gi * wrow[j];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// global_avg_pool: [C,H,W] -> [C].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  require(x.ndim() == 3, errc::shape_mismatch, "global_avg_pool: input must be [C,H,W]");
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  TensorT<T> y({c});
  for (int ch = 0; ch < c; ++ch) {
    const T* p = &x.at(ch, 0, 0);
    T s = 0;
    for (int i = 0; i < hw; ++i) s += p[i];
    y[ch] = s / static_cast<T>(hw);
  }
  return y;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const std::vector<int>& in_shape, const TensorT<T>& gy) {
  require(in_shape.size() == 3, errc::shape_mismatch, "global_avg_pool_backward: shape");
  require(gy.ndim() == 1 && gy.dim(0) == in_shape[0], errc::shape_mismatch,
          "global_avg_pool_backward: gy dim");
  TensorT<T> gx(in_shape);
  const int hw = in_shape[1] * in_shape[2];
  for (int ch = 0; ch < in_shape[0]; ++ch) {
    const T g = gy[ch] / static_cast<T>(hw);
    T* p = &gx.at(ch, 0, 0);
    for (int i = 0; i < hw; ++i) p[i] = g;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Losses. Both reduce by mean over elements and return a scalar.
// ---------------------------------------------------------------------------

// Focal loss on logits with binary targets:
//   p = sigmoid(z), p_t = y ? p : 1-p, a_t = y ? alpha : 1-alpha
//   L = mean(-a_t * (1-p_t)^gamma * log(p_t))
template <typename T>
T focal_loss(const TensorT<T>& logits, const TensorT<T>& targets, T alpha, T gamma) {
  require_same_shape(logits, targets, "focal_loss");
  const std::int64_t n = logits.numel();
  T total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T y = targets[i];
    require(y == T(0) || y == T(1), errc::invalid_argument,
            "focal_loss: targets must be binary 0/1");
    const T p = T(1) / (T(1) + std::exp(-logits[i]));
    const T pt = y == T(1) ? p : T(1) - p;
    const T at = y == T(1) ? alpha : T(1) - alpha;
    const T pt_safe = std::max(pt, T(1e-12));
    total += -at * std::pow(T(1) - pt, gamma) * std::log(pt_safe);
  }
  return total / static_cast<T>(n);
}

// d mean-focal / d logits.
template <typename T>
TensorT<T> focal_loss_backward(const TensorT<T>& logits, const TensorT<T>& targets, T alpha,
                               T gamma) {
  require_same_shape(logits, targets, "focal_loss");
  const std::int64_t n = logits.numel();
  TensorT<T> g(logits.shape());
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const T p = T(1) / (T(1) + std::exp(-logits[i]));
    T d;
    if (targets[i] == T(1)) {
      // d/dz [-a (1-p)^g log p] = a (1-p)^g (g p log p - (1-p))
      const T lp = std::log(std::max(p, T(1e-12)));
      d = alpha * std::pow(T(1) - p, gamma) * (gamma * p * lp - (T(1) - p));
    } else {
      // mirrored: d/dz [-(1-a) p^g log(1-p)] = (1-a) p^g (p - g (1-p) log(1-p))
      const T lq = std::log(std::max(T(1) - p, T(1e-12)));
      d = (T(1) - alpha) * std::pow(p, gamma) * (p - gamma * (T(1) - p) * lq);
    }
    g[i] = d * inv_n;
  }
  return g;
}

// Smooth L1 (Huber with transition beta), mean over elements.
template <typename T>
T smooth_l1(const TensorT<T>& pred, const TensorT<T>& target, T beta) {
  require_same_shape(pred, target, "smooth_l1");
  require(beta > T(0), errc::invalid_argument, "smooth_l1: beta must be positive");
  const std::int64_t n = pred.numel();
  T total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T d = std::abs(pred[i] - target[i]);
    total += d < beta ? T(0.5) * d * d / beta : d - T(0.5) * beta;
  }
  return total / static_cast<T>(n);
}

template <typename T>
TensorT<T> smooth_l1_backward(const TensorT<T>& pred, const TensorT<T>& target, T beta) {
  require_same_shape(pred, target, "smooth_l1");
  require(beta > T(0), errc::invalid_argument, "smooth_l1: beta must be positive");
  const std::int64_t n = pred.numel();
  TensorT<T> g(pred.shape());
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const T d = pred[i] - target[i];
    const T dd = std::abs(d) < beta ? d / beta : (d > T(0) ? T(1) : T(-1));
    g[i] = dd * inv_n;
  }
  return g;
}

// ---------------------------------------------------------------------------
// concat / split along channel dim for [C,H,W] maps.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.ndim() == 3 && b.ndim() == 3 && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
          errc::shape_mismatch,
          "concat_channels: spatial sizes differ, " + a.shape_str() + " vs " + b.shape_str());
  TensorT<T> y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), y.data());
  std::copy(b.data(), b.data() + b.numel(), y.data() + a.numel());
  return y;
}

template <typename T>
void split_channels(const TensorT<T>& g, int ca, TensorT<T>& ga, TensorT<T>& gb) {
  ga = TensorT<T>({ca, g.dim(1), g.dim(2)});
  gb = TensorT<T>({g.dim(0) - ca, g.dim(1), g.dim(2)});
  std::copy(g.data(), g.data() + ga.numel(), ga.data());
  std::copy(g.data() + ga.numel(), g.data() + g.numel(), gb.data());
}

}  // namespace stcd
