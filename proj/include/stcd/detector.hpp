#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "stcd/frame.hpp"
#include "stcd/nets.hpp"
#include "stcd/ops.hpp"
#include "stcd/synthgen.hpp"

namespace stcd {

struct Detection {
  Box box;
  double score = 0;  // in [0,1]
};

struct DetectorConfig {
  double pos_thr = 0.5;
  double neg_thr = 0.4;
  double score_thr = 0.05;
  double nms_iou = 0.5;
  int max_dets = 10;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_beta = 0.1;  // offsets are normalized by anchor size

  void validate() const {
    require(neg_thr >= 0 && pos_thr >= neg_thr && pos_thr <= 1, errc::bad_config,
            "anchor thresholds must satisfy 0 <= neg_thr <= pos_thr <= 1");
    require(score_thr >= 0 && score_thr <= 1 && nms_iou >= 0 && nms_iou <= 1, errc::bad_config,
            "score and nms thresholds must be in [0,1]");
    require(max_dets >= 1, errc::bad_config, "max_dets must be >= 1");
  }
};

// Square anchors centered on feature cells. Raster index:
// (cell_y * fm + cell_x) * A + a.
struct AnchorSet {
  std::vector<Box> boxes;
  int per_cell = 0;
  int grid = 0;
  double stride = 0;

  int index(int a, int cy, int cx) const { return (cy * grid + cx) * per_cell + a; }
  int count() const { return static_cast<int>(boxes.size()); }
};

inline AnchorSet make_anchors(const ArchConfig& arch) {
  AnchorSet s;
  s.per_cell = arch.anchors_per_cell;
  s.grid = arch.feature_size();
  s.stride = static_cast<double>(arch.feature_stride());
  for (int cy = 0; cy < s.grid; ++cy)
    for (int cx = 0; cx < s.grid; ++cx)
      for (int a = 0; a < s.per_cell; ++a) {
        const double side = arch.anchor_sides[static_cast<std::size_t>(a)];
        const double x = (cx + 0.5) * s.stride, y = (cy + 0.5) * s.stride;
        s.boxes.push_back(Box{x - side / 2, y - side / 2, x + side / 2, y + side / 2});
      }
  return s;
}

// Per-anchor assignment: 1 = positive, 0 = negative, -1 = ignore band.
struct AnchorTargets {
  std::vector<std::int8_t> label;
  std::vector<int> matched_gt;               // valid where label == 1
  std::vector<std::array<double, 4>> reg;    // (dx, dy, dw, dh), valid where label == 1
};

inline std::array<double, 4> box_to_offsets(const Box& anchor, const Box& gt) {
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h())};
}

inline Box offsets_to_box(const Box& anchor, double dx, double dy, double dw, double dh) {
  const double cx = anchor.cx() + dx * anchor.w();
  const double cy = anchor.cy() + dy * anchor.h();
  const double w = anchor.w() * std::exp(std::clamp(dw, -4.0, 4.0));
  const double h = anchor.h() * std::exp(std::clamp(dh, -4.0, 4.0));
  return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

inline AnchorTargets assign_anchors(const std::vector<Box>& gts, const AnchorSet& anchors,
                                    double pos_thr, double neg_thr) {
  require(neg_thr >= 0 && neg_thr <= pos_thr && pos_thr <= 1, errc::invalid_argument,
          "assign_anchors: need 0 <= neg_thr <= pos_thr <= 1");
  for (const auto& g : gts)
    require(g.valid(), errc::invalid_argument, "assign_anchors: malformed ground-truth box");

  const int n = anchors.count();
  AnchorTargets t;
  t.label.assign(static_cast<std::size_t>(n), 0);
  t.matched_gt.assign(static_cast<std::size_t>(n), -1);
  t.reg.assign(static_cast<std::size_t>(n), {0, 0, 0, 0});
  if (gts.empty()) return t;  // nothing to match: every anchor is negative

  std::vector<double> best_iou(static_cast<std::size_t>(n), 0.0);
  std::vector<int> best_gt(static_cast<std::size_t>(n), -1);
  std::vector<double> gt_best_iou(gts.size(), -1.0);
  std::vector<int> gt_best_anchor(gts.size(), -1);
  for (int i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(anchors.boxes[static_cast<std::size_t>(i)], gts[g]);
      if (v > best_iou[static_cast<std::size_t>(i)]) {
        best_iou[static_cast<std::size_t>(i)] = v;
        best_gt[static_cast<std::size_t>(i)] = static_cast<int>(g);
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = i;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (best_gt[ui] >= 0 && best_iou[ui] >= pos_thr) {
      t.label[ui] = 1;
      t.matched_gt[ui] = best_gt[ui];
    } else if (best_iou[ui] >= neg_thr) {
      t.label[ui] = -1;  // ignore band
    }
  }
  // guarantee each object owns its best anchor
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best_anchor[g] >= 0 && gt_best_iou[g] > 0) {
      const auto ui = static_cast<std::size_t>(gt_best_anchor[g]);
      t.label[ui] = 1;
      t.matched_gt[ui] = static_cast<int>(g);
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (t.label[ui] == 1)
      t.reg[ui] = box_to_offsets(anchors.boxes[ui], gts[static_cast<std::size_t>(t.matched_gt[ui])]);
  }
  return t;
}

// Greedy NMS over thresholded, decoded predictions. Ordering is stable:
// score desc, then x0 asc, then y0 asc.
inline std::vector<Detection> decode_and_nms(const Tensor& cls_logits, const Tensor& reg,
                                             const AnchorSet& anchors, const DetectorConfig& cfg,
                                             int image_size) {
  cfg.validate();
  const int a_per = anchors.per_cell, fm = anchors.grid;
  require(cls_logits.ndim() == 3 && cls_logits.dim(0) == a_per && cls_logits.dim(1) == fm &&
              cls_logits.dim(2) == fm,
          errc::shape_mismatch, "decode_and_nms: cls logits shape " + cls_logits.shape_str());
  require(reg.ndim() == 3 && reg.dim(0) == 4 * a_per && reg.dim(1) == fm && reg.dim(2) == fm,
          errc::shape_mismatch, "decode_and_nms: reg shape " + reg.shape_str());

  std::vector<Detection> cands;
  for (int cy = 0; cy < fm; ++cy)
    for (int cx = 0; cx < fm; ++cx)
      for (int a = 0; a < a_per; ++a) {
        const double score = 1.0 / (1.0 + std::exp(-static_cast<double>(cls_logits.at(a, cy, cx))));
        if (score <= cfg.score_thr) continue;
        const Box& anchor = anchors.boxes[static_cast<std::size_t>(anchors.index(a, cy, cx))];
        Box b = offsets_to_box(anchor, reg.at(4 * a + 0, cy, cx), reg.at(4 * a + 1, cy, cx),
                               reg.at(4 * a + 2, cy, cx), reg.at(4 * a + 3, cy, cx));
        b.x0 = std::clamp(b.x0, 0.0, static_cast<double>(image_size));
        b.y0 = std::clamp(b.y0, 0.0, static_cast<double>(image_size));
        b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(image_size));
        b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(image_size));
        if (!b.valid()) continue;
        cands.push_back(Detection{b, score});
      }
  std::sort(cands.begin(), cands.end(), [](const Detection& l, const Detection& r) {
    if (l.score != r.score) return l.score > r.score;
    if (l.box.x0 != r.box.x0) return l.box.x0 < r.box.x0;
    return l.box.y0 < r.box.y0;
  });
  std::vector<Detection> kept;
  for (const auto& c : cands) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (iou(c.box, k.box) >= cfg.nms_iou) {
        suppressed = true;
        break;
      }
    if (!suppressed) {
      kept.push_back(c);
      if (static_cast<int>(kept.size()) >= cfg.max_dets) break;
    }
  }
  return kept;
}

// Frame -> features -> heads -> detections. The framewise reference path.
inline std::vector<Detection> detect_frame(const DetectorNet<float>& net,
                                           const DetectorConfig& cfg, const AnchorSet& anchors,
                                           const Frame& frame) {
  const Tensor f = net.features(frame_to_tensor<float>(frame));
  const auto heads = net.heads(f);
  return decode_and_nms(heads.cls_logits, heads.reg_offsets, anchors, cfg, net.arch.image_size);
}

inline std::vector<Detection> detect_features(const DetectorNet<float>& net,
                                              const DetectorConfig& cfg, const AnchorSet& anchors,
                                              const Tensor& features) {
  const auto heads = net.heads(features);
  return decode_and_nms(heads.cls_logits, heads.reg_offsets, anchors, cfg, net.arch.image_size);
}

// ---------------------------------------------------------------------------
// Supervised training on labeled stills: focal loss over non-ignored anchors
// plus smooth L1 on positive-anchor offsets.
// ---------------------------------------------------------------------------

struct DetectorTrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double lr = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplier
  double cls_bias_init = -2.0;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct DetectorTrainResult {
  DetectorNet<float> net;
  std::vector<double> epoch_loss;
};

namespace detail {

// Scatter-gather between anchor-indexed vectors and head tensor layout.
template <typename T>
struct AnchorLossGrads {
  TensorT<T> g_cls, g_reg;
  T loss;
};

template <typename T>
AnchorLossGrads<T> detection_loss_grads(const TensorT<T>& cls_logits, const TensorT<T>& reg,
                                        const AnchorTargets& targets, const AnchorSet& anchors,
                                        const DetectorConfig& cfg) {
  const int a_per = anchors.per_cell, fm = anchors.grid;
  // gather non-ignored cls entries and positive reg entries
  std::vector<T> zs, ys, rp, rt;
  std::vector<int> z_idx;  // flat (a,cy,cx) index
  std::vector<std::array<int, 2>> r_idx;  // (anchor flat index, component)
  for (int cy = 0; cy < fm; ++cy)
    for (int cx = 0; cx < fm; ++cx)
      for (int a = 0; a < a_per; ++a) {
        const int ai = anchors.index(a, cy, cx);
        const auto ui = static_cast<std::size_t>(ai);
        if (targets.label[ui] == -1) continue;
        zs.push_back(cls_logits.at(a, cy, cx));
        ys.push_back(targets.label[ui] == 1 ? T(1) : T(0));
        z_idx.push_back((a * fm + cy) * fm + cx);
        if (targets.label[ui] == 1) {
          for (int c = 0; c < 4; ++c) {
            rp.push_back(reg.at(4 * a + c, cy, cx));
            rt.push_back(static_cast<T>(targets.reg[ui][static_cast<std::size_t>(c)]));
            r_idx.push_back({((4 * a + c) * fm + cy) * fm + cx, c});
          }
        }
      }

  AnchorLossGrads<T> out{TensorT<T>(cls_logits.shape()), TensorT<T>(reg.shape()), T(0)};
  if (!zs.empty()) {
    auto zt = TensorT<T>::from({static_cast<int>(zs.size())}, zs);
    auto yt = TensorT<T>::from({static_cast<int>(ys.size())}, ys);
    out.loss += focal_loss(zt, yt, static_cast<T>(cfg.focal_alpha), static_cast<T>(cfg.focal_gamma));
    auto g = focal_loss_backward(zt, yt, static_cast<T>(cfg.focal_alpha),
                                 static_cast<T>(cfg.focal_gamma));
    for (std::size_t i = 0; i < z_idx.size(); ++i)
      out.g_cls[z_idx[i]] += g[static_cast<std::int64_t>(i)];
  }
  if (!rp.empty()) {
    auto pt = TensorT<T>::from({static_cast<int>(rp.size())}, rp);
    auto tt = TensorT<T>::from({static_cast<int>(rt.size())}, rt);
    out.loss += smooth_l1(pt, tt, static_cast<T>(cfg.smooth_l1_beta));
    auto g = smooth_l1_backward(pt, tt, static_cast<T>(cfg.smooth_l1_beta));
    for (std::size_t i = 0; i < r_idx.size(); ++i)
      out.g_reg[r_idx[i][0]] += g[static_cast<std::int64_t>(i)];
  }
  return out;
}

}  // namespace detail

inline DetectorTrainResult train_detector(const std::vector<Frame>& stills,
                                          const ArchConfig& arch, const DetectorConfig& det_cfg,
                                          const DetectorTrainConfig& cfg) {
  require(!stills.empty(), errc::invalid_argument, "train_detector: empty dataset");
  det_cfg.validate();
  for (const auto& f : stills) {
    f.check();
    require(f.boxes.has_value(), errc::invalid_argument,
            "train_detector: every still must be labeled");
  }

  RngStream rng = RngStream(cfg.seed).derive("detector_init");
  DetectorTrainResult result{DetectorNet<float>::init(arch, rng, cfg.cls_bias_init), {}};
  auto& net = result.net;
  const AnchorSet anchors = make_anchors(arch);

  // anchor targets are a pure function of the annotations; compute once
  std::vector<AnchorTargets> targets;
  targets.reserve(stills.size());
  for (const auto& f : stills) {
    std::vector<Box> gts;
    for (const auto& b : *f.boxes) gts.push_back(b.as_box());
    targets.push_back(assign_anchors(gts, anchors, det_cfg.pos_thr, det_cfg.neg_thr));
  }

  std::vector<int> order(stills.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = net.params();
  RngStream shuffle_rng = RngStream(cfg.seed).derive("detector_shuffle");
  double lr = cfg.lr;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the seeded stream
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);

    double epoch_loss = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      zero_grads(params);
      double batch_loss = 0;
      for (std::size_t bi = start; bi < end; ++bi) {
        const int fi = order[bi];
        const auto tr = net.features_traced(frame_to_tensor<float>(stills[static_cast<std::size_t>(fi)]));
        const auto heads = net.heads(tr.features);
        auto lg = detail::detection_loss_grads<float>(heads.cls_logits, heads.reg_offsets,
                                                      targets[static_cast<std::size_t>(fi)],
                                                      anchors, det_cfg);
        batch_loss += lg.loss;
        Tensor gf = net.heads_backward(tr.features, lg.g_cls, lg.g_reg);
        net.backbone_backward(tr, gf);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto* p : params)
        for (std::int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= inv;
      for (auto* p : params) adam_step(*p, static_cast<float>(lr), cfg.adam);
      epoch_loss += batch_loss / static_cast<double>(end - start);
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1, batches));
    lr *= cfg.lr_decay;
  }
  return result;
}

}  // namespace stcd
