#pragma once

// Built-in verification suite: finite-difference checks of every network at
// 64-bit precision plus the core algebraic identities. Used by the unit
// tests and by the `selftest` CLI command. The reduced architecture keeps
// probe cost small; the kernels under test are width-independent.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stcd/checkpoint.hpp"
#include "stcd/grad_check.hpp"
#include "stcd/nets.hpp"
#include "stcd/temporal.hpp"

namespace stcd::selfcheck {

inline ArchConfig tiny_arch() {
  ArchConfig a;
  a.image_size = 16;
  a.backbone_channels = {4, 6, 8, 8};
  a.backbone_strides = {1, 2, 2, 2};
  a.anchors_per_cell = 3;
  a.anchor_sides = {4.0, 7.0, 11.0};
  a.motion_channels = {3, 4, 5};
  a.decision_hidden = 6;
  return a;
}

inline DTensor random_dtensor(std::vector<int> shape, RngStream& rng, double scale = 1.0) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

inline double weighted_sum(const DTensor& w, const DTensor& y) {
  double s = 0;
  for (std::int64_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
  return s;
}

// Finite-differences every parameter group of `net` (which must already hold
// analytic grads) against the scalar functional `fwd`.
template <typename Net, typename Fwd>
double fd_all_params(const Net& net, Fwd&& fwd, double h = 1e-5) {
  Net scratch = net;
  auto groups = scratch.params();
  auto reference = net.params();
  double worst = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto f = [&](const DTensor& v) {
      groups[gi]->value = v;
      return DTensor::scalar(fwd(static_cast<const Net&>(scratch)));
    };
    const auto res = finite_diff_check(f, reference[gi]->value, reference[gi]->grad, h);
    worst = std::max(worst, res.max_err);
    groups[gi]->value = reference[gi]->value;
  }
  return worst;
}

inline double check_motion_net(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto net = MotionNet<double>::init(arch, rng.derive("net"));
  DTensor x = random_dtensor({2, arch.image_size, arch.image_size}, rng, 0.5);
  DTensor r = random_dtensor({arch.motion_out_channels(), 2, 2}, rng);

  auto tr = net.forward_traced(x);
  zero_grads(net.params());
  DTensor gx = net.backward(tr, r);

  double worst = finite_diff_check(
                     [&](const DTensor& xx) {
                       return DTensor::scalar(weighted_sum(r, net.forward(xx)));
                     },
                     x, gx, 1e-5)
                     .max_err;
  worst = std::max(worst, fd_all_params(net, [&](const MotionNet<double>& n) {
                     return weighted_sum(r, n.forward(x));
                   }));
  return worst;
}

inline double check_warp_net(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto net = WarpNet<double>::init(arch, rng.derive("net"));
  const int fm = arch.feature_size();
  DTensor fkey = random_dtensor({arch.feature_channels(), fm, fm}, rng);
  DTensor m = random_dtensor({arch.motion_out_channels(), fm, fm}, rng);
  DTensor r = random_dtensor({arch.feature_channels(), fm, fm}, rng);

  auto tr = net.forward_traced(fkey, m);
  zero_grads(net.params());
  auto [gf, gm] = net.backward(tr, r);

  double worst = finite_diff_check(
                     [&](const DTensor& v) {
                       return DTensor::scalar(weighted_sum(r, net.forward(v, m)));
                     },
                     fkey, gf, 1e-5)
                     .max_err;
  worst = std::max(worst, finite_diff_check(
                              [&](const DTensor& v) {
                                return DTensor::scalar(weighted_sum(r, net.forward(fkey, v)));
                              },
                              m, gm, 1e-5)
                              .max_err);
  worst = std::max(worst, fd_all_params(net, [&](const WarpNet<double>& n) {
                     return weighted_sum(r, n.forward(fkey, m));
                   }));
  return worst;
}

inline double check_decision_net(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto net = DecisionNet<double>::init(arch, rng.derive("net"));
  const int fm = arch.feature_size();
  DTensor m = random_dtensor({arch.motion_out_channels(), fm, fm}, rng);

  auto tr = net.forward_traced(m);
  zero_grads(net.params());
  DTensor gm = net.backward(tr, 1.0);

  double worst = finite_diff_check(
                     [&](const DTensor& v) { return DTensor::scalar(net.forward(v)); }, m, gm, 1e-5)
                     .max_err;
  worst = std::max(worst, fd_all_params(net, [&](const DecisionNet<double>& n) {
                     return static_cast<double>(n.forward(m));
                   }));
  return worst;
}

// Displacement projection followed by the resampling warp.
inline double check_flow_bilinear(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto head = FlowHead<double>::init(arch, rng.derive("net"));
  const int fm = arch.feature_size();
  DTensor m = random_dtensor({arch.motion_out_channels(), fm, fm}, rng, 0.4);
  DTensor f = random_dtensor({arch.feature_channels(), fm, fm}, rng);
  DTensor r = random_dtensor({arch.feature_channels(), fm, fm}, rng);

  auto compute = [&](const FlowHead<double>& h, const DTensor& feat, const DTensor& motion) {
    return weighted_sum(r, bilinear_warp(feat, h.forward(motion)));
  };

  DTensor flow = head.forward(m);
  auto g = bilinear_warp_backward(f, flow, r);
  zero_grads(head.params());
  DTensor gm = head.backward(m, g.flow);

  double worst = finite_diff_check(
                     [&](const DTensor& v) { return DTensor::scalar(compute(head, v, m)); }, f,
                     g.f, 1e-5)
                     .max_err;
  worst = std::max(worst, finite_diff_check(
                              [&](const DTensor& v) {
                                return DTensor::scalar(compute(head, f, v));
                              },
                              m, gm, 1e-5)
                              .max_err);
  worst = std::max(worst, fd_all_params(head, [&](const FlowHead<double>& h) {
                     return compute(h, f, m);
                   }));
  return worst;
}

inline double check_detector_net(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto net = DetectorNet<double>::init(arch, RngStream(seed).derive("det"));
  DTensor x = random_dtensor({1, arch.image_size, arch.image_size}, rng, 0.3);
  const int fm = arch.feature_size();
  DTensor r_cls = random_dtensor({arch.anchors_per_cell, fm, fm}, rng);
  DTensor r_reg = random_dtensor({4 * arch.anchors_per_cell, fm, fm}, rng);

  auto readout = [&](const DetectorNet<double>& n, const DTensor& img) {
    const DTensor feats = n.features(img);
    const auto heads = n.heads(feats);
    return weighted_sum(r_cls, heads.cls_logits) + weighted_sum(r_reg, heads.reg_offsets);
  };

  auto tr = net.features_traced(x);
  zero_grads(net.params());
  DTensor gf = net.heads_backward(tr.features, r_cls, r_reg);
  net.backbone_backward(tr, gf);

  return fd_all_params(net, [&](const DetectorNet<double>& n) { return readout(n, x); });
}

// The full semi-supervised mimic path: mismatch of warped key features
// against the target features, differentiated through the warp and motion
// networks jointly.
inline double check_mimic_loss_path(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto motion = MotionNet<double>::init(arch, rng.derive("motion"));
  auto warp = WarpNet<double>::init(arch, rng.derive("warp"));
  const int fm = arch.feature_size();
  DTensor pair = random_dtensor({2, arch.image_size, arch.image_size}, rng, 0.5);
  DTensor fkey = random_dtensor({arch.feature_channels(), fm, fm}, rng);
  DTensor ftarget = random_dtensor({arch.feature_channels(), fm, fm}, rng);

  auto loss_of = [&](const MotionNet<double>& mn, const WarpNet<double>& wn, const DTensor& x) {
    return static_cast<double>(correlation_score(wn.forward(fkey, mn.forward(x)), ftarget));
  };

  auto m_tr = motion.forward_traced(pair);
  auto w_tr = warp.forward_traced(fkey, m_tr.out);
  zero_grads(motion.params());
  zero_grads(warp.params());
  DTensor g_out = correlation_score_backward(w_tr.out, ftarget, 1.0);
  auto [g_fkey, g_m] = warp.backward(w_tr, g_out);
  (void)g_fkey;
  DTensor g_pair = motion.backward(m_tr, g_m);

  double worst = finite_diff_check(
                     [&](const DTensor& v) { return DTensor::scalar(loss_of(motion, warp, v)); },
                     pair, g_pair, 1e-5)
                     .max_err;
  worst = std::max(worst, fd_all_params(motion, [&](const MotionNet<double>& mn) {
                     return loss_of(mn, warp, pair);
                   }));
  worst = std::max(worst, fd_all_params(warp, [&](const WarpNet<double>& wn) {
                     return loss_of(motion, wn, pair);
                   }));
  return worst;
}

// Regression branch with the measured mismatch held constant.
inline double check_decision_loss_path(std::uint64_t seed) {
  const ArchConfig arch = tiny_arch();
  RngStream rng(seed);
  auto dec = DecisionNet<double>::init(arch, rng.derive("dec"));
  const int fm = arch.feature_size();
  DTensor m = random_dtensor({arch.motion_out_channels(), fm, fm}, rng);
  const double q = std::abs(rng.normal(0.5, 0.2));

  auto tr = dec.forward_traced(m);
  zero_grads(dec.params());
  dec.backward(tr, decision_loss_backward_s(q, tr.score, 1.0));
  return fd_all_params(dec, [&](const DecisionNet<double>& n) {
    return decision_loss(q, static_cast<double>(n.forward(m)));
  });
}

// --------------------------------------------------------------------------
// Aggregate self-test used by the CLI.
// --------------------------------------------------------------------------

struct SelfTestReport {
  int passed = 0;
  int failed = 0;
  std::vector<std::string> failures;

  void record(const std::string& name, bool ok) {
    if (ok)
      ++passed;
    else {
      ++failed;
      failures.push_back(name);
    }
  }
  bool ok() const { return failed == 0; }
};

inline SelfTestReport run_selftest(int seeds_per_check = 3) {
  SelfTestReport rep;
  const double rtol = 1e-4;
  for (int s = 1; s <= seeds_per_check; ++s) {
    rep.record("grad/motion", check_motion_net(static_cast<std::uint64_t>(s)) < rtol);
    rep.record("grad/warp", check_warp_net(static_cast<std::uint64_t>(s) + 100) < rtol);
    rep.record("grad/decision", check_decision_net(static_cast<std::uint64_t>(s) + 200) < rtol);
    rep.record("grad/flow_bilinear", check_flow_bilinear(static_cast<std::uint64_t>(s) + 300) < rtol);
    rep.record("grad/detector", check_detector_net(static_cast<std::uint64_t>(s) + 400) < rtol);
    rep.record("grad/mimic_path", check_mimic_loss_path(static_cast<std::uint64_t>(s) + 500) < rtol);
    rep.record("grad/decision_path",
               check_decision_loss_path(static_cast<std::uint64_t>(s) + 600) < rtol);
  }

  {  // the checker itself must flag a corrupted gradient
    DTensor x = DTensor::from({2}, {1.0, -1.0});
    auto f = [](const DTensor& t) { return DTensor::scalar(t[0] * t[0] + t[1]); };
    DTensor bad = DTensor::from({2}, {2.0 * x[0] + 0.5, 1.0});
    rep.record("grad/detects_fault", finite_diff_check(f, x, bad, 1e-5).max_err > 1e-2);
  }

  {  // loss identities at 64-bit
    RngStream rng(7);
    DTensor a = random_dtensor({4, 3, 3}, rng);
    DTensor b = a;
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 1.0;
    rep.record("loss/corr_zero", correlation_score(a, a) == 0.0);
    rep.record("loss/corr_unit", correlation_score(a, b) == 1.0);
    rep.record("loss/dec_zero", decision_loss(0.37, 0.37) == 0.0);
    rep.record("loss/feat_mean", feature_loss<double>({1.0, 3.0}) == 2.0);
  }

  {  // conv identity and adam no-op
    RngStream rng(9);
    DTensor x = random_dtensor({2, 5, 5}, rng);
    DTensor w({2, 2, 1, 1});
    w.at(0, 0, 0, 0) = 1.0;
    w.at(1, 1, 0, 0) = 1.0;
    DTensor bias({2});
    DTensor y = conv2d(x, w, bias, 1, 0);
    bool same = true;
    for (std::int64_t i = 0; i < x.numel(); ++i) same = same && y[i] == x[i];
    rep.record("ops/conv_identity", same);

    auto g = ParamGroup<double>::make("p", random_dtensor({8}, rng));
    DTensor before = g.value;
    for (std::int64_t i = 0; i < 8; ++i) g.grad[i] = rng.normal();
    adam_step(g, 0.0);
    bool frozen = true;
    for (std::int64_t i = 0; i < 8; ++i) frozen = frozen && g.value[i] == before[i];
    rep.record("ops/adam_lr0_noop", frozen);
  }

  {  // zero-flow resampling identity
    RngStream rng(11);
    DTensor f = random_dtensor({3, 4, 4}, rng);
    DTensor zero({2, 4, 4});
    DTensor out = bilinear_warp(f, zero);
    bool same = true;
    for (std::int64_t i = 0; i < f.numel(); ++i) same = same && out[i] == f[i];
    rep.record("ops/warp_identity", same);
  }

  {  // seeded stream reproducibility
    RngStream a(123), b(123);
    bool same = true;
    for (int i = 0; i < 64; ++i) same = same && a.next_u64() == b.next_u64();
    rep.record("rng/deterministic", same);
  }

  {  // checkpoint round-trip in memory
    const ArchConfig arch = tiny_arch();
    auto det = DetectorNet<float>::init(arch, RngStream(21));
    auto temporal = TemporalNets<float>::init(arch, RngStream(22));
    Checkpoint c = pack_checkpoint(det, temporal, CheckpointMeta{1, 2, 3});
    const std::string bytes = serialize_checkpoint(c);
    bool ok = true;
    try {
      Checkpoint back = deserialize_checkpoint(bytes);
      ok = serialize_checkpoint(back) == bytes && back.meta.seed == 2;
    } catch (const Error&) {
      ok = false;
    }
    rep.record("io/checkpoint_roundtrip", ok);
  }
  return rep;
}

}  // namespace stcd::selfcheck
