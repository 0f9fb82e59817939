#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stcd/detector.hpp"
#include "stcd/flops.hpp"
#include "stcd/scheduler.hpp"
#include "stcd/synthgen.hpp"
#include "stcd/temporal.hpp"

namespace stcd {

// --------------------------------------------------------------------------
// Average precision (all-point interpolation, single class).
// --------------------------------------------------------------------------

struct ScoredDet {
  int frame = 0;
  Box box;
  double score = 0;
};

struct FrameGroundTruth {
  int frame = 0;
  std::vector<Box> boxes;
};

namespace detail {

inline void sort_dets(std::vector<ScoredDet>& dets) {
  std::sort(dets.begin(), dets.end(), [](const ScoredDet& a, const ScoredDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
    return a.box.y0 < b.box.y0;
  });
}

// Greedy matching in score order: a detection claims the unmatched ground
// truth with the highest IoU >= thr inside its frame. Returns tp flags in
// the sorted order. Greedy labels are prefix-stable in the list length.
inline std::vector<char> match_tp(const std::vector<ScoredDet>& sorted_dets,
                                  const std::vector<FrameGroundTruth>& gts, double iou_thr) {
  std::map<int, const FrameGroundTruth*> by_frame;
  for (const auto& g : gts) by_frame[g.frame] = &g;
  std::map<int, std::vector<char>> used;
  for (const auto& g : gts) used[g.frame].assign(g.boxes.size(), 0);

  std::vector<char> tp(sorted_dets.size(), 0);
  for (std::size_t i = 0; i < sorted_dets.size(); ++i) {
    const auto& d = sorted_dets[i];
    auto it = by_frame.find(d.frame);
    if (it == by_frame.end()) continue;
    const auto& boxes = it->second->boxes;
    auto& flags = used[d.frame];
    double best = iou_thr;
    int best_j = -1;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (flags[j]) continue;
      const double v = iou(d.box, boxes[j]);
      if (v >= best && (best_j < 0 || v > best)) {
        best = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0) {
      tp[i] = 1;
      flags[static_cast<std::size_t>(best_j)] = 1;
    }
  }
  return tp;
}

}  // namespace detail

inline double average_precision(std::vector<ScoredDet> dets,
                                const std::vector<FrameGroundTruth>& gts, double iou_thr) {
  require(iou_thr > 0 && iou_thr < 1, errc::invalid_argument, "iou threshold must be in (0,1)");
  std::size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.boxes.size();
  require(total_gt > 0, errc::invalid_argument,
          "average_precision: no ground truth, recall is undefined");
  if (dets.empty()) return 0.0;

  detail::sort_dets(dets);
  const std::vector<char> tp = detail::match_tp(dets, gts, iou_thr);

  std::vector<double> precision(dets.size()), recall(dets.size());
  int cum_tp = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    cum_tp += tp[i];
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(total_gt);
  }
  // precision envelope from the right, integrate over recall steps
  double ap = 0, env = 0, prev_recall = 0;
  std::vector<double> envelope(dets.size());
  for (std::size_t i = dets.size(); i-- > 0;) {
    env = std::max(env, precision[i]);
    envelope[i] = env;
  }
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

// --------------------------------------------------------------------------
// Sequence evaluation through the scheduler.
// --------------------------------------------------------------------------

struct EvalResult {
  double tau = 0;  // the scheduling parameter used (tau, theta, or period)
  std::string mode;
  double map = 0;
  std::vector<double> per_seq_ap;
  double key_fraction = 0;
  double flops_per_frame = 0;
  double ms_per_frame_mean = 0;
  double ms_per_frame_std = 0;
  std::uint64_t seed = 0;
};

struct SequenceRun {
  std::vector<std::vector<Detection>> per_frame;
  std::vector<StepDiagnostics> diags;
  int key_count = 0;
};

inline SequenceRun run_sequence(const DetectorNet<float>& det, const TemporalNets<float>& temporal,
                                const DetectorConfig& det_cfg, const SchedPolicy& policy,
                                const VideoSequence& video) {
  Scheduler sched(det, temporal, det_cfg, policy);
  SequenceRun out;
  for (const auto& f : video.frames) out.per_frame.push_back(sched.step(f));
  out.diags = sched.log();
  out.key_count = sched.key_count();
  return out;
}

inline double sequence_ap(const SequenceRun& run, const VideoSequence& video, double iou_thr,
                          const std::function<bool(int)>& frame_filter = nullptr) {
  std::vector<ScoredDet> dets;
  std::vector<FrameGroundTruth> gts;
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    const int fi = static_cast<int>(i);
    if (frame_filter && !frame_filter(fi)) continue;
    const auto& frame = video.frames[i];
    require(frame.boxes.has_value(), errc::invalid_argument,
            "sequence_ap: unlabeled frame in evaluation data");
    FrameGroundTruth g{fi, {}};
    for (const auto& b : *frame.boxes) g.boxes.push_back(b.as_box());
    gts.push_back(std::move(g));
    for (const auto& d : run.per_frame[i]) dets.push_back(ScoredDet{fi, d.box, d.score});
  }
  std::size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.boxes.size();
  if (total_gt == 0) return -1.0;  // undefined on this subset
  return average_precision(std::move(dets), gts, iou_thr);
}

inline EvalResult summarize_runs(const std::vector<SequenceRun>& runs,
                                 const std::vector<VideoSequence>& videos, double iou_thr,
                                 const SchedPolicy& policy, std::uint64_t seed) {
  EvalResult r;
  r.mode = sched_mode_name(policy.mode);
  r.tau = policy.mode == SchedMode::decision_net ? policy.tau
          : policy.mode == SchedMode::fixed      ? static_cast<double>(policy.fixed_n)
          : policy.mode == SchedMode::all_key    ? 0.0
                                                 : policy.theta;
  r.seed = seed;
  double ap_sum = 0;
  int keys = 0, frames = 0;
  double flops = 0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const double ap = sequence_ap(runs[s], videos[s], iou_thr);
    require(ap >= 0, errc::invalid_argument, "evaluation sequence has no ground truth");
    r.per_seq_ap.push_back(ap);
    ap_sum += ap;
    keys += runs[s].key_count;
    frames += static_cast<int>(videos[s].frames.size());
    for (const auto& d : runs[s].diags) flops += static_cast<double>(d.flops_charged);
  }
  require(!runs.empty(), errc::invalid_argument, "no evaluation sequences");
  r.map = ap_sum / static_cast<double>(runs.size());
  r.key_fraction = static_cast<double>(keys) / static_cast<double>(frames);
  r.flops_per_frame = flops / static_cast<double>(frames);
  return r;
}

inline EvalResult evaluate_sequences(const DetectorNet<float>& det,
                                     const TemporalNets<float>& temporal,
                                     const DetectorConfig& det_cfg, const SchedPolicy& policy,
                                     const std::vector<VideoSequence>& videos, double iou_thr,
                                     std::uint64_t seed) {
  require(!videos.empty(), errc::invalid_argument, "evaluate_sequences: no test videos");
  for (const auto& v : videos)
    require(v.labeled, errc::invalid_argument,
            "evaluate_sequences: test sequences must be labeled");
  std::vector<SequenceRun> runs;
  for (const auto& v : videos) runs.push_back(run_sequence(det, temporal, det_cfg, policy, v));
  return summarize_runs(runs, videos, iou_thr, policy, seed);
}

// Mean per-sequence AP restricted to frames selected by the per-frame flag
// (sequences with no ground truth in the subset are skipped).
inline double subset_map(const std::vector<SequenceRun>& runs,
                         const std::vector<VideoSequence>& videos, double iou_thr,
                         bool corrupted_only) {
  double sum = 0;
  int n = 0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto& v = videos[s];
    auto filter = [&](int fi) {
      const bool c = fi < static_cast<int>(v.corrupted.size()) && v.corrupted[static_cast<std::size_t>(fi)];
      return corrupted_only ? c : !c;
    };
    const double ap = sequence_ap(runs[s], v, iou_thr, filter);
    if (ap >= 0) {
      sum += ap;
      ++n;
    }
  }
  return n > 0 ? sum / n : -1.0;
}

// --------------------------------------------------------------------------
// Parameter sweeps and scheduling ablation.
// --------------------------------------------------------------------------

inline std::vector<EvalResult> sweep_tau(const DetectorNet<float>& det,
                                         const TemporalNets<float>& temporal,
                                         const DetectorConfig& det_cfg, SchedPolicy policy,
                                         std::vector<double> taus,
                                         const std::vector<VideoSequence>& videos, double iou_thr,
                                         std::uint64_t seed) {
  require(taus.size() >= 2, errc::invalid_argument, "sweep_tau: need at least two tau values");
  std::sort(taus.begin(), taus.end());
  std::vector<EvalResult> rows;
  for (double tau : taus) {
    policy.mode = SchedMode::decision_net;
    policy.tau = tau;
    rows.push_back(evaluate_sequences(det, temporal, det_cfg, policy, videos, iou_thr, seed));
  }
  return rows;
}

// Bisection on a monotone-decreasing key-fraction curve. Returns the
// parameter and whether the target was met within the tolerance.
inline std::pair<double, bool> calibrate_threshold(
    const std::function<double(double)>& key_fraction_at, double lo, double hi, double target,
    double tol, int iters = 24) {
  double best_x = lo, best_err = 1e9;
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double frac = key_fraction_at(mid);
    const double err = std::abs(frac - target);
    if (err < best_err) {
      best_err = err;
      best_x = mid;
    }
    if (frac > target)
      lo = mid;  // too many key frames: raise the threshold
    else
      hi = mid;
  }
  return {best_x, best_err <= tol};
}

struct AblationRow {
  bool calibrated = false;
  EvalResult result;
};

// Evaluates the learned policy at the given tau, then each baseline with its
// parameter calibrated so the mean key fraction matches within the tolerance.
inline std::vector<AblationRow> ablate_scheduler(const DetectorNet<float>& det,
                                                 const TemporalNets<float>& temporal,
                                                 const DetectorConfig& det_cfg, double tau,
                                                 const std::vector<VideoSequence>& videos,
                                                 double iou_thr, std::uint64_t seed,
                                                 double rate_tol = 0.05) {
  std::vector<AblationRow> rows;
  SchedPolicy learned;
  learned.mode = SchedMode::decision_net;
  learned.tau = tau;
  EvalResult base = evaluate_sequences(det, temporal, det_cfg, learned, videos, iou_thr, seed);
  const double target = base.key_fraction;
  rows.push_back(AblationRow{true, base});

  {  // fixed(n): key fraction is ~1/n, pick the closest period
    SchedPolicy p;
    p.mode = SchedMode::fixed;
    p.fixed_n = std::max(1, static_cast<int>(std::lround(1.0 / target)));
    EvalResult r = evaluate_sequences(det, temporal, det_cfg, p, videos, iou_thr, seed);
    rows.push_back(AblationRow{std::abs(r.key_fraction - target) <= rate_tol, r});
  }
  for (SchedMode mode : {SchedMode::grey_corr, SchedMode::flow_corr}) {
    SchedPolicy p;
    p.mode = mode;
    auto frac_at = [&](double theta) {
      p.theta = theta;
      return evaluate_sequences(det, temporal, det_cfg, p, videos, iou_thr, seed).key_fraction;
    };
    auto [theta, ok] = calibrate_threshold(frac_at, 0.0, mode == SchedMode::grey_corr ? 0.25 : 5.0,
                                           target, rate_tol);
    p.theta = theta;
    EvalResult r = evaluate_sequences(det, temporal, det_cfg, p, videos, iou_thr, seed);
    rows.push_back(AblationRow{ok && std::abs(r.key_fraction - target) <= rate_tol, r});
  }
  return rows;
}

// --------------------------------------------------------------------------
// Wall-clock benchmark. One untimed warm-up pass, then `repeats` timed passes.
// --------------------------------------------------------------------------

struct RuntimeStats {
  double ms_per_frame_mean = 0;
  double ms_per_frame_std = 0;
  int frames = 0;
};

inline RuntimeStats benchmark_runtime(const DetectorNet<float>& det,
                                      const TemporalNets<float>& temporal,
                                      const DetectorConfig& det_cfg, const SchedPolicy& policy,
                                      const std::vector<VideoSequence>& videos, int repeats) {
  require(repeats >= 3, errc::invalid_argument, "benchmark_runtime: need at least 3 repeats");
  int frames = 0;
  for (const auto& v : videos) frames += static_cast<int>(v.frames.size());
  require(frames > 0, errc::invalid_argument, "benchmark_runtime: no frames");

  for (const auto& v : videos) run_sequence(det, temporal, det_cfg, policy, v);  // warm-up

  std::vector<double> per_pass;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& v : videos) run_sequence(det, temporal, det_cfg, policy, v);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    per_pass.push_back(ms / frames);
  }
  RuntimeStats out;
  out.frames = frames;
  for (double v : per_pass) out.ms_per_frame_mean += v;
  out.ms_per_frame_mean /= repeats;
  double var = 0;
  for (double v : per_pass) var += (v - out.ms_per_frame_mean) * (v - out.ms_per_frame_mean);
  out.ms_per_frame_std = std::sqrt(var / repeats);
  return out;
}

// --------------------------------------------------------------------------
// Results CSV. Column order is part of the format; shortest-round-trip float
// text keeps output byte-deterministic across runs.
// --------------------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

inline std::string results_csv(const std::vector<EvalResult>& rows) {
  std::string out = "tau,mode,map,key_fraction,flops_per_frame,ms_per_frame_mean,ms_per_frame_std,seed\n";
  for (const auto& r : rows) {
    out += fmt_double(r.tau);
    out += ',';
    out += r.mode;
    out += ',';
    out += fmt_double(r.map);
    out += ',';
    out += fmt_double(r.key_fraction);
    out += ',';
    out += fmt_double(r.flops_per_frame);
    out += ',';
    out += fmt_double(r.ms_per_frame_mean);
    out += ',';
    out += fmt_double(r.ms_per_frame_std);
    out += ',';
    out += std::to_string(r.seed);
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::io_missing_file, "cannot open for write: " + path.string());
  os << text;
  require(os.good(), errc::io_truncated, "short write: " + path.string());
}

}  // namespace stcd
