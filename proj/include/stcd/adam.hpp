#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stcd/tensor.hpp"

namespace stcd {

// One named parameter tensor with its gradient and Adam state.
template <typename T>
struct ParamGroup {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  TensorT<T> adam_m;
  TensorT<T> adam_v;
  std::uint64_t step_count = 0;

  static ParamGroup make(std::string name, TensorT<T> value) {
    ParamGroup g;
    g.name = std::move(name);
    g.grad = TensorT<T>(value.shape());
    g.adam_m = TensorT<T>(value.shape());
    g.adam_v = TensorT<T>(value.shape());
    g.value = std::move(value);
    return g;
  }

  void zero_grad() { grad.fill(T(0)); }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   value -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// lr == 0 leaves the value tensor bit-identical (moments still advance).
template <typename T>
void adam_step(ParamGroup<T>& group, T lr, const AdamConfig& cfg = {}) {
  require(lr >= T(0), errc::invalid_argument, "adam_step: learning rate must be >= 0");
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  group.step_count += 1;
  const T bc1 = T(1) - std::pow(b1, static_cast<T>(group.step_count));
  const T bc2 = T(1) - std::pow(b2, static_cast<T>(group.step_count));
  const std::int64_t n = group.value.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const T g = group.grad[i];
    group.adam_m[i] = b1 * group.adam_m[i] + (T(1) - b1) * g;
    group.adam_v[i] = b2 * group.adam_v[i] + (T(1) - b2) * g * g;
    if (lr != T(0)) {
      const T mhat = group.adam_m[i] / bc1;
      const T vhat = group.adam_v[i] / bc2;
      group.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace stcd
