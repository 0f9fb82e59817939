#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stcd/adam.hpp"
#include "stcd/arch.hpp"
#include "stcd/ops.hpp"
#include "stcd/rng.hpp"
#include "stcd/tensor.hpp"

namespace stcd {

// Learnable convolution (weights + bias) with fixed stride/padding.
template <typename T>
struct ConvParam {
  ParamGroup<T> w, b;
  int stride = 1, pad = 1;

  static ConvParam make(const std::string& name, int cout, int cin, int k, int stride, int pad,
                        RngStream& rng) {
    ConvParam c;
    c.stride = stride;
    c.pad = pad;
    TensorT<T> w({cout, cin, k, k});
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));  // He fan-in
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std_dev));
    c.w = ParamGroup<T>::make(name + ".w", std::move(w));
    c.b = ParamGroup<T>::make(name + ".b", TensorT<T>({cout}));
    return c;
  }

  TensorT<T> forward(const TensorT<T>& x) const { return conv2d(x, w.value, b.value, stride, pad); }

  // Accumulates parameter grads, returns input grad.
  TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& gy) {
    auto g = conv2d_backward(x, w.value, stride, pad, gy);
    for (std::int64_t i = 0; i < g.w.numel(); ++i) w.grad[i] += g.w[i];
    for (std::int64_t i = 0; i < g.b.numel(); ++i) b.grad[i] += g.b[i];
    return std::move(g.x);
  }
};

template <typename T>
struct LinearParam {
  ParamGroup<T> w, b;

  static LinearParam make(const std::string& name, int out, int in, RngStream& rng) {
    LinearParam l;
    TensorT<T> w({out, in});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std_dev));
    l.w = ParamGroup<T>::make(name + ".w", std::move(w));
    l.b = ParamGroup<T>::make(name + ".b", TensorT<T>({out}));
    return l;
  }

  TensorT<T> forward(const TensorT<T>& x) const { return linear(x, w.value, b.value); }

  TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& gy) {
    auto g = linear_backward(x, w.value, gy);
    for (std::int64_t i = 0; i < g.w.numel(); ++i) w.grad[i] += g.w[i];
    for (std::int64_t i = 0; i < g.b.numel(); ++i) b.grad[i] += g.b[i];
    return std::move(g.x);
  }
};

// ---------------------------------------------------------------------------
// Detection backbone + heads. Single feature level at stride 8; one 3x3 head
// each for classification logits and box offsets.
// ---------------------------------------------------------------------------

template <typename T>
struct DetectorNet {
  ArchConfig arch;
  ConvParam<T> c1, c2, c3, c4;  // backbone
  ConvParam<T> cls, reg;        // heads

  static DetectorNet init(const ArchConfig& arch, RngStream rng, double cls_bias_init = -2.0) {
    arch.validate();
    DetectorNet n;
    n.arch = arch;
    const auto& ch = arch.backbone_channels;
    const auto& st = arch.backbone_strides;
    n.c1 = ConvParam<T>::make("det.backbone.conv1", ch[0], 1, 3, st[0], 1, rng);
    n.c2 = ConvParam<T>::make("det.backbone.conv2", ch[1], ch[0], 3, st[1], 1, rng);
    n.c3 = ConvParam<T>::make("det.backbone.conv3", ch[2], ch[1], 3, st[2], 1, rng);
    n.c4 = ConvParam<T>::make("det.backbone.conv4", ch[3], ch[2], 3, st[3], 1, rng);
    const int a = arch.anchors_per_cell;
    n.cls = ConvParam<T>::make("det.cls", a, ch[3], 3, 1, 1, rng);
    n.reg = ConvParam<T>::make("det.reg", 4 * a, ch[3], 3, 1, 1, rng);
    // prior so that initial objectness is low; keeps early focal loss sane
    n.cls.b.value.fill(static_cast<T>(cls_bias_init));
    return n;
  }

  struct BackboneTrace {
    TensorT<T> x, z1, a1, z2, a2, z3, a3, z4, features;
  };

  TensorT<T> features(const TensorT<T>& img01) const {
    require(img01.ndim() == 3 && img01.dim(0) == 1 && img01.dim(1) == arch.image_size &&
                img01.dim(2) == arch.image_size,
            errc::shape_mismatch, "backbone: expected [1," + std::to_string(arch.image_size) +
                                      "," + std::to_string(arch.image_size) + "], got " +
                                      img01.shape_str());
    TensorT<T> t = activate(c1.forward(img01), Act::relu);
    t = activate(c2.forward(t), Act::relu);
    t = activate(c3.forward(t), Act::relu);
    t = activate(c4.forward(t), Act::relu);
    return t;
  }

  BackboneTrace features_traced(const TensorT<T>& img01) const {
    BackboneTrace tr;
    tr.x = img01;
    tr.z1 = c1.forward(tr.x);
    tr.a1 = activate(tr.z1, Act::relu);
    tr.z2 = c2.forward(tr.a1);
    tr.a2 = activate(tr.z2, Act::relu);
    tr.z3 = c3.forward(tr.a2);
    tr.a3 = activate(tr.z3, Act::relu);
    tr.z4 = c4.forward(tr.a3);
    tr.features = activate(tr.z4, Act::relu);
    return tr;
  }

  // Accumulates backbone parameter grads from an upstream feature gradient.
  void backbone_backward(const BackboneTrace& tr, const TensorT<T>& g_features) {
    TensorT<T> g = activate_backward(tr.z4, tr.features, g_features, Act::relu);
    g = c4.backward(tr.a3, g);
    g = activate_backward(tr.z3, tr.a3, g, Act::relu);
    g = c3.backward(tr.a2, g);
    g = activate_backward(tr.z2, tr.a2, g, Act::relu);
    g = c2.backward(tr.a1, g);
    g = activate_backward(tr.z1, tr.a1, g, Act::relu);
    c1.backward(tr.x, g);
  }

  struct HeadOut {
    TensorT<T> cls_logits;   // [A, fm, fm]
    TensorT<T> reg_offsets;  // [4A, fm, fm]
  };

  HeadOut heads(const TensorT<T>& features_in) const {
    require(features_in.ndim() == 3 && features_in.dim(0) == arch.feature_channels() &&
                features_in.dim(1) == arch.feature_size() &&
                features_in.dim(2) == arch.feature_size(),
            errc::shape_mismatch, "heads: feature map shape " + features_in.shape_str());
    return HeadOut{cls.forward(features_in), reg.forward(features_in)};
  }

  // Returns gradient w.r.t. the feature map.
  TensorT<T> heads_backward(const TensorT<T>& features_in, const TensorT<T>& g_cls,
                            const TensorT<T>& g_reg) {
    TensorT<T> gf = cls.backward(features_in, g_cls);
    TensorT<T> gf2 = reg.backward(features_in, g_reg);
    for (std::int64_t i = 0; i < gf.numel(); ++i) gf[i] += gf2[i];
    return gf;
  }

  std::vector<ParamGroup<T>*> params() {
    return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b, &c4.w, &c4.b,
            &cls.w, &cls.b, &reg.w, &reg.b};
  }
  std::vector<const ParamGroup<T>*> params() const {
    return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b, &c4.w, &c4.b,
            &cls.w, &cls.b, &reg.w, &reg.b};
  }
};

// ---------------------------------------------------------------------------
// Motion encoder: stacks the reference and current frame as two channels and
// reduces to the feature-map resolution with three stride-2 convs.
// ---------------------------------------------------------------------------

template <typename T>
struct MotionNet {
  ArchConfig arch;
  ConvParam<T> c1, c2, c3;

  static MotionNet init(const ArchConfig& arch, RngStream rng) {
    MotionNet n;
    n.arch = arch;
    const auto& mc = arch.motion_channels;
    n.c1 = ConvParam<T>::make("motion.conv1", mc[0], 2, 3, 2, 1, rng);
    n.c2 = ConvParam<T>::make("motion.conv2", mc[1], mc[0], 3, 2, 1, rng);
    n.c3 = ConvParam<T>::make("motion.conv3", mc[2], mc[1], 3, 2, 1, rng);
    return n;
  }

  struct Trace {
    TensorT<T> x, z1, a1, z2, a2, z3, out;
  };

  TensorT<T> forward(const TensorT<T>& pair01) const {
    const T alpha = static_cast<T>(arch.leaky_alpha);
    TensorT<T> t = activate(c1.forward(pair01), Act::leaky_relu, alpha);
    t = activate(c2.forward(t), Act::leaky_relu, alpha);
    t = activate(c3.forward(t), Act::leaky_relu, alpha);
    return t;
  }

  Trace forward_traced(const TensorT<T>& pair01) const {
    const T alpha = static_cast<T>(arch.leaky_alpha);
    Trace tr;
    tr.x = pair01;
    tr.z1 = c1.forward(tr.x);
    tr.a1 = activate(tr.z1, Act::leaky_relu, alpha);
    tr.z2 = c2.forward(tr.a1);
    tr.a2 = activate(tr.z2, Act::leaky_relu, alpha);
    tr.z3 = c3.forward(tr.a2);
    tr.out = activate(tr.z3, Act::leaky_relu, alpha);
    return tr;
  }

  // Accumulates parameter grads; returns gradient w.r.t. the stacked input.
  TensorT<T> backward(const Trace& tr, const TensorT<T>& g_out) {
    const T alpha = static_cast<T>(arch.leaky_alpha);
    TensorT<T> g = activate_backward(tr.z3, tr.out, g_out, Act::leaky_relu, alpha);
    g = c3.backward(tr.a2, g);
    g = activate_backward(tr.z2, tr.a2, g, Act::leaky_relu, alpha);
    g = c2.backward(tr.a1, g);
    g = activate_backward(tr.z1, tr.a1, g, Act::leaky_relu, alpha);
    return c1.backward(tr.x, g);
  }

  std::vector<ParamGroup<T>*> params() { return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b}; }
  std::vector<const ParamGroup<T>*> params() const {
    return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b};
  }
};

// ---------------------------------------------------------------------------
// Warp transform: learns to move key-frame features to the current frame.
// Concat(F_key, M) -> 3x3 conv -> relu -> 1x1 conv.
// ---------------------------------------------------------------------------

template <typename T>
struct WarpNet {
  ArchConfig arch;
  ConvParam<T> c1, c2;

  static WarpNet init(const ArchConfig& arch, RngStream rng) {
    WarpNet n;
    n.arch = arch;
    const int fc = arch.feature_channels(), mc = arch.motion_out_channels();
    n.c1 = ConvParam<T>::make("warp.conv1", fc, fc + mc, 3, 1, 1, rng);
    n.c2 = ConvParam<T>::make("warp.conv2", fc, fc, 1, 1, 0, rng);
    // damped mixing layer: the initial synthesized map starts near zero, so
    // the starting mimic error is the target's own energy for every seed
    for (std::int64_t i = 0; i < n.c2.w.value.numel(); ++i) n.c2.w.value[i] *= T(0.1);
    return n;
  }

  struct Trace {
    TensorT<T> x, z1, a1, out;
  };

  TensorT<T> forward(const TensorT<T>& f_key, const TensorT<T>& motion) const {
    return forward_cat(concat_channels(f_key, motion));
  }

  TensorT<T> forward_cat(const TensorT<T>& cat) const {
    return c2.forward(activate(c1.forward(cat), Act::relu));
  }

  Trace forward_traced(const TensorT<T>& f_key, const TensorT<T>& motion) const {
    Trace tr;
    tr.x = concat_channels(f_key, motion);
    tr.z1 = c1.forward(tr.x);
    tr.a1 = activate(tr.z1, Act::relu);
    tr.out = c2.forward(tr.a1);
    return tr;
  }

  // Returns gradients w.r.t. (f_key, motion).
  std::pair<TensorT<T>, TensorT<T>> backward(const Trace& tr, const TensorT<T>& g_out) {
    TensorT<T> g = c2.backward(tr.a1, g_out);
    g = activate_backward(tr.z1, tr.a1, g, Act::relu);
    TensorT<T> gcat = c1.backward(tr.x, g);
    TensorT<T> gf, gm;
    split_channels(gcat, arch.feature_channels(), gf, gm);
    return {std::move(gf), std::move(gm)};
  }

  std::vector<ParamGroup<T>*> params() { return {&c1.w, &c1.b, &c2.w, &c2.b}; }
  std::vector<const ParamGroup<T>*> params() const { return {&c1.w, &c1.b, &c2.w, &c2.b}; }
};

// ---------------------------------------------------------------------------
// Consistency regressor: predicts the feature mismatch score from motion
// features alone. pool -> linear -> relu -> linear, no output activation.
// ---------------------------------------------------------------------------

template <typename T>
struct DecisionNet {
  ArchConfig arch;
  LinearParam<T> fc1, fc2;

  static DecisionNet init(const ArchConfig& arch, RngStream rng) {
    DecisionNet n;
    n.arch = arch;
    n.fc1 = LinearParam<T>::make("decision.fc1", arch.decision_hidden,
                                 arch.motion_out_channels(), rng);
    n.fc2 = LinearParam<T>::make("decision.fc2", 1, arch.decision_hidden, rng);
    return n;
  }

  struct Trace {
    std::vector<int> m_shape;
    TensorT<T> pooled, z1, a1;
    T score{};
  };

  T forward(const TensorT<T>& motion) const {
    TensorT<T> pooled = global_avg_pool(motion);
    TensorT<T> h = activate(fc1.forward(pooled), Act::relu);
    return fc2.forward(h)[0];
  }

  Trace forward_traced(const TensorT<T>& motion) const {
    Trace tr;
    tr.m_shape = motion.shape();
    tr.pooled = global_avg_pool(motion);
    tr.z1 = fc1.forward(tr.pooled);
    tr.a1 = activate(tr.z1, Act::relu);
    tr.score = fc2.forward(tr.a1)[0];
    return tr;
  }

  // Returns gradient w.r.t. the motion features.
  TensorT<T> backward(const Trace& tr, T g_score) {
    TensorT<T> g = fc2.backward(tr.a1, TensorT<T>::from({1}, {g_score}));
    g = activate_backward(tr.z1, tr.a1, g, Act::relu);
    g = fc1.backward(tr.pooled, g);
    return global_avg_pool_backward(tr.m_shape, g);
  }

  std::vector<ParamGroup<T>*> params() { return {&fc1.w, &fc1.b, &fc2.w, &fc2.b}; }
  std::vector<const ParamGroup<T>*> params() const { return {&fc1.w, &fc1.b, &fc2.w, &fc2.b}; }
};

// 1x1 projection of motion features to a 2-channel displacement field
// (units: feature cells). Feeds the resampling warp baseline and the
// flow-statistic scheduling baseline.
template <typename T>
struct FlowHead {
  ArchConfig arch;
  ConvParam<T> conv;

  static FlowHead init(const ArchConfig& arch, RngStream rng) {
    FlowHead n;
    n.arch = arch;
    n.conv = ConvParam<T>::make("flow.conv", 2, arch.motion_out_channels(), 1, 1, 0, rng);
    return n;
  }

  TensorT<T> forward(const TensorT<T>& motion) const { return conv.forward(motion); }

  TensorT<T> backward(const TensorT<T>& motion, const TensorT<T>& g_flow) {
    return conv.backward(motion, g_flow);
  }

  std::vector<ParamGroup<T>*> params() { return {&conv.w, &conv.b}; }
  std::vector<const ParamGroup<T>*> params() const { return {&conv.w, &conv.b}; }
};

// The four temporal networks trained on unlabeled video.
template <typename T>
struct TemporalNets {
  MotionNet<T> motion;
  WarpNet<T> warp;
  DecisionNet<T> decision;
  FlowHead<T> flow;

  static TemporalNets init(const ArchConfig& arch, RngStream rng) {
    TemporalNets t;
    t.motion = MotionNet<T>::init(arch, rng.derive("motion"));
    t.warp = WarpNet<T>::init(arch, rng.derive("warp"));
    t.decision = DecisionNet<T>::init(arch, rng.derive("decision"));
    t.flow = FlowHead<T>::init(arch, rng.derive("flow"));
    return t;
  }

  std::vector<ParamGroup<T>*> params() {
    std::vector<ParamGroup<T>*> out;
    for (auto* p : motion.params()) out.push_back(p);
    for (auto* p : warp.params()) out.push_back(p);
    for (auto* p : decision.params()) out.push_back(p);
    for (auto* p : flow.params()) out.push_back(p);
    return out;
  }
  std::vector<const ParamGroup<T>*> params() const {
    std::vector<const ParamGroup<T>*> out;
    for (auto* p : motion.params()) out.push_back(p);
    for (auto* p : warp.params()) out.push_back(p);
    for (auto* p : decision.params()) out.push_back(p);
    for (auto* p : flow.params()) out.push_back(p);
    return out;
  }
};

template <typename T>
void zero_grads(const std::vector<ParamGroup<T>*>& groups) {
  for (auto* g : groups) g->zero_grad();
}

}  // namespace stcd
