#pragma once

// Brute-force average-precision reference, independent of the library
// implementation: enumerate every score cut-point (top-k prefix), re-run the
// greedy matching from scratch on that prefix, build the PR points, apply the
// precision envelope by direct scan and integrate. Intentionally O(N^2 * G).

#include <algorithm>
#include <vector>

#include "stcd/evalbench.hpp"

namespace stcd::testing {

inline double reference_average_precision(std::vector<ScoredDet> dets,
                                          const std::vector<FrameGroundTruth>& gts,
                                          double iou_thr) {
  std::size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.boxes.size();
  if (dets.empty()) return 0.0;
  std::sort(dets.begin(), dets.end(), [](const ScoredDet& a, const ScoredDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
    return a.box.y0 < b.box.y0;
  });

  auto tp_in_prefix = [&](std::size_t k) {
    int tp = 0;
    std::vector<std::vector<char>> used;
    for (const auto& g : gts) used.emplace_back(g.boxes.size(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      const auto& d = dets[i];
      double best = -1;
      int best_g = -1, best_j = -1;
      for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        if (gts[gi].frame != d.frame) continue;
        for (std::size_t j = 0; j < gts[gi].boxes.size(); ++j) {
          if (used[gi][j]) continue;
          const double v = iou(d.box, gts[gi].boxes[j]);
          if (v >= iou_thr && v > best) {
            best = v;
            best_g = static_cast<int>(gi);
            best_j = static_cast<int>(j);
          }
        }
      }
      if (best_g >= 0) {
        used[static_cast<std::size_t>(best_g)][static_cast<std::size_t>(best_j)] = 1;
        ++tp;
      }
    }
    return tp;
  };

  const std::size_t n = dets.size();
  std::vector<double> precision(n), recall(n);
  for (std::size_t k = 1; k <= n; ++k) {
    const int tp = tp_in_prefix(k);
    precision[k - 1] = static_cast<double>(tp) / static_cast<double>(k);
    recall[k - 1] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }
  double ap = 0, prev = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double env = 0;
    for (std::size_t j = k; j < n; ++j) env = std::max(env, precision[j]);
    ap += (recall[k] - prev) * env;
    prev = recall[k];
  }
  return ap;
}

// Small random evaluation instances for the oracle comparison.
struct RandomApInstance {
  std::vector<ScoredDet> dets;
  std::vector<FrameGroundTruth> gts;
};

inline RandomApInstance random_ap_instance(RngStream& rng) {
  RandomApInstance inst;
  const int frames = 1 + rng.uniform_int(3);
  int total_gt = 0;
  for (int f = 0; f < frames; ++f) {
    FrameGroundTruth g{f, {}};
    const int n = rng.uniform_int(4);
    for (int i = 0; i < n; ++i) {
      Box b{rng.uniform(0, 40), rng.uniform(0, 40), 0, 0};
      b.x1 = b.x0 + rng.uniform(4, 20);
      b.y1 = b.y0 + rng.uniform(4, 20);
      g.boxes.push_back(b);
      ++total_gt;
    }
    inst.gts.push_back(std::move(g));
  }
  if (total_gt == 0) {
    Box b{10, 10, 20, 20};
    inst.gts[0].boxes.push_back(b);
  }
  const int dets = rng.uniform_int(11);
  for (int i = 0; i < dets; ++i) {
    const int f = rng.uniform_int(frames);
    // half the detections hug a ground-truth box so matches actually occur
    Box b;
    if (rng.uniform() < 0.5 && !inst.gts[static_cast<std::size_t>(f)].boxes.empty()) {
      const auto& g = inst.gts[static_cast<std::size_t>(f)].boxes[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(inst.gts[static_cast<std::size_t>(f)].boxes.size())))];
      b = Box{g.x0 + rng.uniform(-3, 3), g.y0 + rng.uniform(-3, 3), 0, 0};
      b.x1 = b.x0 + g.w() + rng.uniform(-3, 3);
      b.y1 = b.y0 + g.h() + rng.uniform(-3, 3);
      if (!b.valid()) b = g;
    } else {
      b = Box{rng.uniform(0, 40), rng.uniform(0, 40), 0, 0};
      b.x1 = b.x0 + rng.uniform(4, 20);
      b.y1 = b.y0 + rng.uniform(4, 20);
    }
    inst.dets.push_back(ScoredDet{f, b, rng.uniform()});
  }
  return inst;
}

}  // namespace stcd::testing
