#include <catch2/catch_amalgamated.hpp>

#include "stcd/adam.hpp"
#include "stcd/grad_check.hpp"
#include "stcd/ops.hpp"
#include "stcd/rng.hpp"
#include "stcd/tensor.hpp"

using namespace stcd;

namespace {

DTensor random_tensor(std::vector<int> shape, RngStream& rng, double scale = 1.0) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

}  // namespace

TEST_CASE("tensor basics", "[ops]") {
  Tensor t({2, 3});
  REQUIRE(t.numel() == 6);
  REQUIRE(t.all_finite());
  t.at(1, 2) = 5.0f;
  REQUIRE(t[5] == 5.0f);
  REQUIRE_THROWS_AS(Tensor({0, 3}), Error);
  REQUIRE_THROWS_AS(Tensor::from({2, 2}, {1.f, 2.f, 3.f}), Error);
}

TEST_CASE("rng determinism and derivation", "[ops]") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  RngStream c(42);
  auto d1 = c.derive("stills");
  auto d2 = c.derive("stills");
  auto d3 = c.derive("videos");
  REQUIRE(d1.next_u64() == d2.next_u64());
  REQUIRE(d1.next_u64() != d3.next_u64());
  RngStream u(7);
  for (int i = 0; i < 1000; ++i) {
    double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
}

TEST_CASE("conv2d identity with 1x1 kernel", "[ops]") {
  RngStream rng(1);
  DTensor x = random_tensor({3, 5, 5}, rng);
  DTensor w({3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w.at(i, i, 0, 0) = 1.0;
  DTensor b({3});
  DTensor y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(y[i] == x[i]);
}

TEST_CASE("conv2d all-ones 3x3 on constant input", "[ops]") {
  DTensor x = DTensor::full({1, 5, 5}, 2.0);
  DTensor w = DTensor::full({1, 1, 3, 3}, 1.0);
  DTensor b({1});
  DTensor y = conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == std::vector<int>{1, 5, 5});
  // interior: 9 taps x 2.0; corners 4 taps; edges 6 taps
  REQUIRE(y.at(0, 2, 2) == 18.0);
  REQUIRE(y.at(0, 0, 0) == 8.0);
  REQUIRE(y.at(0, 0, 2) == 12.0);
}

TEST_CASE("conv2d shape errors name the offending dimension", "[ops]") {
  DTensor x({3, 4, 4});
  DTensor w({2, 4, 3, 3});  // Cin mismatch
  DTensor b({2});
  try {
    conv2d(x, w, b, 1, 1);
    FAIL("expected shape error");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::shape_mismatch);
    REQUIRE(std::string(e.what()).find("channels 3") != std::string::npos);
  }
  DTensor weven({2, 3, 2, 2});
  REQUIRE_THROWS_AS(conv2d(x, weven, b, 1, 1), Error);
  REQUIRE_THROWS_AS(conv2d(x, w, b, 0, 1), Error);
}

TEST_CASE("conv2d stride output dims", "[ops]") {
  DTensor x({1, 64, 64});
  DTensor w({4, 1, 3, 3});
  DTensor b({4});
  auto y = conv2d(x, w, b, 2, 1);
  REQUIRE(y.shape() == std::vector<int>{4, 32, 32});
}

TEST_CASE("conv2d finite difference gradients", "[ops][gradcheck]") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    RngStream rng(seed);
    DTensor x = random_tensor({2, 4, 4}, rng);
    DTensor w = random_tensor({3, 2, 3, 3}, rng, 0.5);
    DTensor b = random_tensor({3}, rng, 0.1);
    const int stride = seed % 2 == 0 ? 2 : 1;

    // scalar readout: weighted sum of outputs, fixed weights
    DTensor r;
    auto readout = [&](const DTensor& y) {
      double s = 0;
      for (std::int64_t i = 0; i < y.numel(); ++i) s += r[i] * y[i];
      return DTensor::scalar(s);
    };
    {
      DTensor y0 = conv2d(x, w, b, stride, 1);
      RngStream rr(seed + 100);
      r = random_tensor(y0.shape(), rr);
    }

    DTensor gy = r;  // d readout / d y
    auto grads = conv2d_backward(x, w, stride, 1, gy);

    auto fx = [&](const DTensor& xx) { return readout(conv2d(xx, w, b, stride, 1)); };
    auto fw = [&](const DTensor& ww) { return readout(conv2d(x, ww, b, stride, 1)); };
    auto fb = [&](const DTensor& bb) { return readout(conv2d(x, w, bb, stride, 1)); };
    REQUIRE(finite_diff_check(fx, x, grads.x, 1e-5).ok(1e-4));
    REQUIRE(finite_diff_check(fw, w, grads.w, 1e-5).ok(1e-4));
    REQUIRE(finite_diff_check(fb, b, grads.b, 1e-5).ok(1e-4));
  }
}

TEST_CASE("activations definitions", "[ops]") {
  DTensor x = DTensor::from({4}, {-1.0, 2.0, 0.0, -3.0});
  auto r = activate(x, Act::relu);
  REQUIRE(r[0] == 0.0);
  REQUIRE(r[1] == 2.0);
  auto s = activate(DTensor::from({1}, {0.0}), Act::sigmoid);
  REQUIRE(s[0] == 0.5);
  auto l = activate(x, Act::leaky_relu, 0.1);
  REQUIRE(l[3] == Catch::Approx(-0.3));
  REQUIRE_THROWS_AS(activate(x, Act::leaky_relu, 1.5), Error);
}

TEST_CASE("leaky_relu gradient at negative input is alpha", "[ops][gradcheck]") {
  DTensor x = DTensor::from({1}, {-3.0});
  auto f = [](const DTensor& xx) {
    return DTensor::scalar(activate(xx, Act::leaky_relu, 0.1)[0]);
  };
  DTensor g = DTensor::from({1}, {0.1});
  auto res = finite_diff_check(f, x, g, 1e-5);
  REQUIRE(res.ok(1e-4));
}

TEST_CASE("activation gradients across kinds", "[ops][gradcheck]") {
  RngStream rng(5);
  DTensor x = random_tensor({10}, rng);
  DTensor r = random_tensor({10}, rng);
  for (Act kind : {Act::relu, Act::leaky_relu, Act::sigmoid}) {
    auto f = [&](const DTensor& xx) {
      auto y = activate(xx, kind, 0.1);
      double s = 0;
      for (int i = 0; i < 10; ++i) s += r[i] * y[i];
      return DTensor::scalar(s);
    };
    DTensor y = activate(x, kind, 0.1);
    DTensor g = activate_backward(x, y, r, kind, 0.1);
    REQUIRE(finite_diff_check(f, x, g, 1e-6).ok(1e-4));
  }
}

TEST_CASE("linear identity and zero cases", "[ops]") {
  DTensor x = DTensor::from({3}, {1.0, -2.0, 3.0});
  DTensor wid({3, 3});
  for (int i = 0; i < 3; ++i) wid.at(i, i) = 1.0;
  DTensor b0({3});
  auto y = linear(x, wid, b0);
  for (int i = 0; i < 3; ++i) REQUIRE(y[i] == x[i]);

  DTensor wz({2, 3});
  DTensor b = DTensor::from({2}, {0.5, -1.5});
  auto yb = linear(x, wz, b);
  REQUIRE(yb[0] == 0.5);
  REQUIRE(yb[1] == -1.5);

  DTensor wbad({2, 4});
  REQUIRE_THROWS_AS(linear(x, wbad, b), Error);
}

TEST_CASE("linear finite difference gradients", "[ops][gradcheck]") {
  RngStream rng(9);
  DTensor x = random_tensor({4}, rng);
  DTensor w = random_tensor({3, 4}, rng);
  DTensor b = random_tensor({3}, rng);
  DTensor r = random_tensor({3}, rng);
  auto readout = [&](const DTensor& y) {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += r[i] * y[i];
    return DTensor::scalar(s);
  };
  auto g = linear_backward(x, w, r);
  REQUIRE(finite_diff_check([&](const DTensor& t) { return readout(linear(t, w, b)); }, x, g.x, 1e-6).ok(1e-4));
  REQUIRE(finite_diff_check([&](const DTensor& t) { return readout(linear(x, t, b)); }, w, g.w, 1e-6).ok(1e-4));
  REQUIRE(finite_diff_check([&](const DTensor& t) { return readout(linear(x, w, t)); }, b, g.b, 1e-6).ok(1e-4));
}

TEST_CASE("global_avg_pool values and gradient", "[ops][gradcheck]") {
  auto c = global_avg_pool(DTensor::full({3, 4, 4}, 2.5));
  for (int i = 0; i < 3; ++i) REQUIRE(c[i] == 2.5);

  DTensor x = DTensor::from({1, 2, 2}, {1.0, 3.0, 5.0, 7.0});
  REQUIRE(global_avg_pool(x)[0] == 4.0);

  RngStream rng(3);
  DTensor xr = random_tensor({2, 3, 3}, rng);
  DTensor r = random_tensor({2}, rng);
  auto f = [&](const DTensor& t) {
    auto y = global_avg_pool(t);
    return DTensor::scalar(r[0] * y[0] + r[1] * y[1]);
  };
  DTensor g = global_avg_pool_backward(xr.shape(), r);
  // each input cell receives upstream/(H*W)
  REQUIRE(g.at(0, 1, 1) == r[0] / 9.0);
  REQUIRE(finite_diff_check(f, xr, g, 1e-6).ok(1e-4));
}

TEST_CASE("focal loss analytic values", "[ops]") {
  // perfect prediction: loss -> 0
  DTensor big = DTensor::from({1}, {30.0});
  DTensor one = DTensor::from({1}, {1.0});
  REQUIRE(focal_loss(big, one, 0.25, 2.0) < 1e-12);

  // gamma=0, alpha=1, p=0.5, y=1 -> ln 2
  DTensor z0 = DTensor::from({1}, {0.0});
  REQUIRE(focal_loss(z0, one, 1.0, 0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));

  // gamma=2, alpha=0.25, p=0.9, y=1 -> 0.25 * 0.01 * (-ln 0.9)
  DTensor z9 = DTensor::from({1}, {std::log(9.0)});
  REQUIRE(focal_loss(z9, one, 0.25, 2.0) ==
          Catch::Approx(0.25 * 0.01 * (-std::log(0.9))).epsilon(1e-9));

  DTensor bad = DTensor::from({1}, {0.5});
  REQUIRE_THROWS_AS(focal_loss(z0, bad, 0.25, 2.0), Error);
}

TEST_CASE("focal loss gradient", "[ops][gradcheck]") {
  RngStream rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    DTensor z = random_tensor({8}, rng);
    DTensor y({8});
    for (int i = 0; i < 8; ++i) y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    auto f = [&](const DTensor& t) { return DTensor::scalar(focal_loss(t, y, 0.25, 2.0)); };
    DTensor g = focal_loss_backward(z, y, 0.25, 2.0);
    REQUIRE(finite_diff_check(f, z, g, 1e-6).ok(1e-4));
  }
}

TEST_CASE("smooth_l1 values and gradient", "[ops][gradcheck]") {
  DTensor p = DTensor::from({2}, {1.0, 2.0});
  REQUIRE(smooth_l1(p, p, 1.0) == 0.0);

  DTensor t0 = DTensor::from({1}, {0.0});
  REQUIRE(smooth_l1(DTensor::from({1}, {0.5}), t0, 1.0) == Catch::Approx(0.125).epsilon(1e-12));
  REQUIRE(smooth_l1(DTensor::from({1}, {2.0}), t0, 1.0) == Catch::Approx(1.5).epsilon(1e-12));
  REQUIRE_THROWS_AS(smooth_l1(p, DTensor::from({3}, {0., 0., 0.}), 1.0), Error);

  RngStream rng(23);
  DTensor pr = random_tensor({6}, rng, 2.0);
  DTensor tr = random_tensor({6}, rng, 2.0);
  auto f = [&](const DTensor& x) { return DTensor::scalar(smooth_l1(x, tr, 1.0)); };
  REQUIRE(finite_diff_check(f, pr, smooth_l1_backward(pr, tr, 1.0), 1e-6).ok(1e-4));
}

TEST_CASE("adam zero gradient leaves parameter unchanged", "[ops]") {
  auto g = ParamGroup<double>::make("p", DTensor::from({3}, {1.0, -2.0, 0.5}));
  DTensor before = g.value;
  adam_step(g, 1e-3);
  for (int i = 0; i < 3; ++i) REQUIRE(g.value[i] == before[i]);
  REQUIRE(g.step_count == 1);
}

TEST_CASE("adam first-step magnitude matches the bias-corrected update", "[ops]") {
  auto g = ParamGroup<double>::make("p", DTensor::from({1}, {0.0}));
  g.grad[0] = 1.0;
  adam_step(g, 1e-3);
  // m_hat = 1, v_hat = 1 -> delta ~ -1e-3/(1+1e-8)
  REQUIRE(std::abs(g.value[0] - (-9.99999995e-4)) < 1e-10);
}

TEST_CASE("adam lr=0 is a bit-exact no-op on parameters", "[ops]") {
  RngStream rng(31);
  auto g = ParamGroup<double>::make("p", random_tensor({16}, rng));
  DTensor before = g.value;
  for (int step = 0; step < 5; ++step) {
    for (int i = 0; i < 16; ++i) g.grad[i] = rng.normal();
    adam_step(g, 0.0);
  }
  for (int i = 0; i < 16; ++i) {
    REQUIRE(std::memcmp(&g.value[i], &before[i], sizeof(double)) == 0);
  }
  REQUIRE(g.step_count == 5);
  REQUIRE_THROWS_AS(adam_step(g, -1.0), Error);
}

TEST_CASE("finite_diff_check is exact for linear maps", "[ops]") {
  DTensor x = DTensor::from({3}, {1.0, 2.0, 3.0});
  auto f = [](const DTensor& t) { return DTensor::scalar(3.0 * t[0] - 2.0 * t[1] + 0.5 * t[2]); };
  DTensor g = DTensor::from({3}, {3.0, -2.0, 0.5});
  auto res = finite_diff_check(f, x, g, 1e-5);
  REQUIRE(res.max_err < 1e-8);
}

TEST_CASE("finite_diff_check on a conv+relu+pool composite", "[ops][gradcheck]") {
  RngStream rng(41);
  DTensor x = random_tensor({2, 6, 6}, rng);
  DTensor w = random_tensor({3, 2, 3, 3}, rng, 0.5);
  DTensor b = random_tensor({3}, rng, 0.1);
  auto f = [&](const DTensor& t) {
    auto y = global_avg_pool(activate(conv2d(t, w, b, 1, 1), Act::relu));
    return DTensor::scalar(y[0] + 2.0 * y[1] - y[2]);
  };
  // analytic: chain through pool -> relu -> conv
  DTensor z = conv2d(x, w, b, 1, 1);
  DTensor a = activate(z, Act::relu);
  DTensor gpool = DTensor::from({3}, {1.0, 2.0, -1.0});
  DTensor ga = global_avg_pool_backward(a.shape(), gpool);
  DTensor gz = activate_backward(z, a, ga, Act::relu);
  auto grads = conv2d_backward(x, w, 1, 1, gz);
  auto res = finite_diff_check(f, x, grads.x, 1e-5);
  REQUIRE(res.max_err < 1e-4);
}

TEST_CASE("finite_diff_check flags a corrupted gradient", "[ops]") {
  DTensor x = DTensor::from({2}, {1.0, -1.0});
  auto f = [](const DTensor& t) { return DTensor::scalar(t[0] * t[0] + t[1]); };
  DTensor g = DTensor::from({2}, {2.0 * x[0] + 0.5, 1.0});  // corrupted first element
  auto res = finite_diff_check(f, x, g, 1e-5);
  REQUIRE(res.max_err > 1e-2);
}

TEST_CASE("finite_diff_check rejects non-scalar functions", "[ops]") {
  DTensor x = DTensor::from({2}, {1.0, 2.0});
  auto f = [](const DTensor& t) { return t; };
  REQUIRE_THROWS_AS(finite_diff_check(f, x, x, 1e-5), Error);
}
