#pragma once

#include <cmath>
#include <vector>

#include "stcd/frame.hpp"
#include "stcd/nets.hpp"
#include "stcd/ops.hpp"
#include "stcd/tensor.hpp"

namespace stcd {

// Motion features between a reference (key) frame and the current frame.
template <typename T>
TensorT<T> motion_features(const Frame& key, const Frame& current, const MotionNet<T>& net) {
  require(key.width == net.arch.image_size && key.height == net.arch.image_size &&
              current.width == net.arch.image_size && current.height == net.arch.image_size,
          errc::shape_mismatch, "motion_features: frame size does not match configured size");
  return net.forward(frame_pair_tensor<T>(key, current));
}

// ---------------------------------------------------------------------------
// Bilinear resampling warp. out(c,y,x) = F(c, y + flow_y(y,x), x + flow_x(y,x))
// sampled bilinearly with border clamping. Differentiable in F and flow.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> bilinear_warp(const TensorT<T>& f, const TensorT<T>& flow) {
  require(f.ndim() == 3, errc::shape_mismatch, "bilinear_warp: feature map must be [C,H,W]");
  require(flow.ndim() == 3 && flow.dim(0) == 2 && flow.dim(1) == f.dim(1) &&
              flow.dim(2) == f.dim(2),
          errc::shape_mismatch, "bilinear_warp: flow must be [2,H,W] matching the feature map");
  const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
  TensorT<T> out(f.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T sy = static_cast<T>(y) + flow.at(1, y, x);
      const T sx = static_cast<T>(x) + flow.at(0, y, x);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const T wy = sy - static_cast<T>(y0), wx = sx - static_cast<T>(x0);
      const int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
      const int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
      for (int ch = 0; ch < c; ++ch) {
        const T v00 = f.at(ch, y0c, x0c), v01 = f.at(ch, y0c, x1c);
        const T v10 = f.at(ch, y1c, x0c), v11 = f.at(ch, y1c, x1c);
        out.at(ch, y, x) = (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
                           wy * ((T(1) - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

template <typename T>
struct BilinearWarpGrads {
  TensorT<T> f, flow;
};

template <typename T>
BilinearWarpGrads<T> bilinear_warp_backward(const TensorT<T>& f, const TensorT<T>& flow,
                                            const TensorT<T>& gy) {
  require_same_shape(f, gy, "bilinear_warp_backward");
  const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
  BilinearWarpGrads<T> g{TensorT<T>(f.shape()), TensorT<T>(flow.shape())};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T sy = static_cast<T>(y) + flow.at(1, y, x);
      const T sx = static_cast<T>(x) + flow.at(0, y, x);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const T wy = sy - static_cast<T>(y0), wx = sx - static_cast<T>(x0);
      const int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
      const int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
      T gsx = 0, gsy = 0;
      for (int ch = 0; ch < c; ++ch) {
        const T go = gy.at(ch, y, x);
        const T v00 = f.at(ch, y0c, x0c), v01 = f.at(ch, y0c, x1c);
        const T v10 = f.at(ch, y1c, x0c), v11 = f.at(ch, y1c, x1c);
        g.f.at(ch, y0c, x0c) += go * (T(1) - wy) * (T(1) - wx);
        g.f.at(ch, y0c, x1c) += go * (T(1) - wy) * wx;
        g.f.at(ch, y1c, x0c) += go * wy * (T(1) - wx);
        g.f.at(ch, y1c, x1c) += go * wy * wx;
        gsx += go * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
        gsy += go * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
      }
      g.flow.at(0, y, x) = gsx;
      g.flow.at(1, y, x) = gsy;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Feature mismatch score and the two training losses.
// ---------------------------------------------------------------------------

// Mean squared difference over every element of the two maps. Zero exactly
// when the maps are identical.
template <typename T>
T correlation_score(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "correlation_score");
  const std::int64_t n = a.numel();
  T total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    total += d * d;
  }
  return total / static_cast<T>(n);
}

// d correlation_score / d a (with b held fixed).
template <typename T>
TensorT<T> correlation_score_backward(const TensorT<T>& a, const TensorT<T>& b, T upstream) {
  require_same_shape(a, b, "correlation_score");
  TensorT<T> g(a.shape());
  const T scale = upstream * T(2) / static_cast<T>(a.numel());
  for (std::int64_t i = 0; i < a.numel(); ++i) g[i] = scale * (a[i] - b[i]);
  return g;
}

// Batch feature loss: arithmetic mean of the per-pair mismatch scores.
template <typename T>
T feature_loss(const std::vector<T>& qs) {
  require(!qs.empty(), errc::invalid_argument, "feature_loss: empty batch");
  T total = 0;
  for (T q : qs) total += q;
  return total / static_cast<T>(qs.size());
}

// Squared regression error of the predicted score against the measured
// mismatch. The target q is a constant here: the gradient only reaches the
// score path.
template <typename T>
T decision_loss(T q, T s) {
  const T d = q - s;
  return d * d;
}

template <typename T>
T decision_loss_backward_s(T q, T s, T upstream = T(1)) {
  return upstream * T(-2) * (q - s);
}

}  // namespace stcd
