#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "stcd/tensor.hpp"

namespace stcd {

struct GradCheckResult {
  double max_err = 0;       // max over elements of |fd - g| / max(|fd|, |g|, atol/rtol)
  std::int64_t worst = -1;  // element index of the max
  double fd_at_worst = 0;
  double analytic_at_worst = 0;

  bool ok(double rtol) const { return max_err < rtol; }
};

// Central-difference comparison of an analytic gradient. f must be scalar
// valued (a 1-element tensor); any other output shape is rejected. Runs at
// 64-bit precision regardless of the pipeline storage type.
inline GradCheckResult finite_diff_check(const std::function<DTensor(const DTensor&)>& f,
                                         const DTensor& x, const DTensor& analytic_grad,
                                         double h, double atol = 1e-6, double rtol = 1e-4) {
  require(h > 0, errc::invalid_argument, "finite_diff_check: h must be positive");
  require_same_shape(x, analytic_grad, "finite_diff_check");
  auto eval_scalar = [&](const DTensor& in) {
    DTensor out = f(in);
    require(out.numel() == 1, errc::invalid_argument,
            "finite_diff_check: function output must be scalar, got " + out.shape_str());
    return out[0];
  };

  GradCheckResult res;
  DTensor probe = x;
  const double floor = atol / rtol;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = eval_scalar(probe);
    probe[i] = orig - h;
    const double fm = eval_scalar(probe);
    probe[i] = orig;
    const double fd = (fp - fm) / (2 * h);
    const double g = analytic_grad[i];
    const double denom = std::max({std::abs(fd), std::abs(g), floor});
    const double err = std::abs(fd - g) / denom;
    if (err > res.max_err) {
      res.max_err = err;
      res.worst = i;
      res.fd_at_worst = fd;
      res.analytic_at_worst = g;
    }
  }
  return res;
}

}  // namespace stcd
