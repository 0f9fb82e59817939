#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stcd/checkpoint.hpp"
#include "stcd/detector.hpp"
#include "stcd/flops.hpp"
#include "stcd/temporal.hpp"

namespace stcd {

enum class SchedMode { decision_net, fixed, grey_corr, flow_corr, all_key };

inline const char* sched_mode_name(SchedMode m) {
  switch (m) {
    case SchedMode::decision_net: return "decision_net";
    case SchedMode::fixed: return "fixed";
    case SchedMode::grey_corr: return "grey_corr";
    case SchedMode::flow_corr: return "flow_corr";
    case SchedMode::all_key: return "all_key";
  }
  return "?";
}

inline SchedMode sched_mode_from(const std::string& s) {
  if (s == "decision_net") return SchedMode::decision_net;
  if (s == "fixed") return SchedMode::fixed;
  if (s == "grey_corr") return SchedMode::grey_corr;
  if (s == "flow_corr") return SchedMode::flow_corr;
  if (s == "all_key") return SchedMode::all_key;
  fail(errc::bad_config, "unknown scheduler mode: " + s);
}

// How non-key features are synthesized: the learned conv transform, or the
// resampling baseline driven by the projected displacement field.
enum class WarpMode { warpnet, bilinear };

struct SchedPolicy {
  SchedMode mode = SchedMode::decision_net;
  double tau = 0.1;     // decision_net: refresh when predicted score > tau
  int fixed_n = 3;      // fixed: every n-th frame is a key frame
  double theta = 0.01;  // grey_corr / flow_corr statistic threshold
  WarpMode warp_mode = WarpMode::warpnet;

  void validate() const {
    if (mode == SchedMode::fixed)
      require(fixed_n >= 1, errc::bad_config, "fixed schedule period must be >= 1");
    if (mode == SchedMode::grey_corr || mode == SchedMode::flow_corr)
      require(theta >= 0, errc::bad_config, "correlation threshold must be >= 0");
  }
};

struct StepDiagnostics {
  int frame_index = 0;
  bool key_path = false;
  std::optional<double> s_i;  // decision statistic, when one was computed
  std::int64_t flops_charged = 0;
};

// Mean squared difference of two grey frames on the [0,1] scale.
inline double grey_mse(const Frame& a, const Frame& b) {
  require(a.width == b.width && a.height == b.height, errc::shape_mismatch,
          "grey_mse: frame sizes differ");
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = (static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i])) / 255.0;
    s += d * d;
  }
  return s / static_cast<double>(a.pixels.size());
}

inline double mean_abs(const Tensor& t) {
  double s = 0;
  for (std::int64_t i = 0; i < t.numel(); ++i) s += std::abs(static_cast<double>(t[i]));
  return s / static_cast<double>(t.numel());
}

// Stand-alone refresh decision for the non-learned baselines.
inline bool baseline_decide(SchedMode mode, int frame_index, int fixed_n, double theta,
                            const Frame& key, const Frame& current, const Tensor* flow) {
  switch (mode) {
    case SchedMode::fixed:
      require(fixed_n >= 1, errc::invalid_argument, "fixed schedule period must be >= 1");
      return frame_index % fixed_n == 0;
    case SchedMode::grey_corr:
      require(theta >= 0, errc::invalid_argument, "threshold must be >= 0");
      return grey_mse(key, current) > theta;
    case SchedMode::flow_corr:
      require(theta >= 0, errc::invalid_argument, "threshold must be >= 0");
      require(flow != nullptr, errc::invalid_argument, "flow_corr needs the flow field");
      return mean_abs(*flow) > theta;
    case SchedMode::all_key:
      return true;
    case SchedMode::decision_net:
      fail(errc::invalid_argument, "decision_net is not a baseline policy");
  }
  return true;
}

// Streaming per-video state machine: routes each frame to the heavy
// (backbone) or light (motion + warp) path and keeps the key-frame cache.
// Holds const references to the model; never mutates parameters.
class Scheduler {
 public:
  Scheduler(const DetectorNet<float>& det, const TemporalNets<float>& temporal,
            const DetectorConfig& det_cfg, SchedPolicy policy)
      : det_(&det),
        temporal_(&temporal),
        det_cfg_(det_cfg),
        policy_(policy),
        anchors_(make_anchors(det.arch)),
        flops_(FlopModel::from(det.arch)) {
    det_cfg_.validate();
    policy_.validate();
  }

  int frames_seen() const { return frames_seen_; }
  int key_count() const { return key_count_; }
  const std::vector<StepDiagnostics>& log() const { return log_; }
  const Frame& key_frame() const {
    require(frames_seen_ > 0, errc::invalid_argument, "scheduler has not seen any frame");
    return key_;
  }
  const Tensor& key_features() const {
    require(frames_seen_ > 0, errc::invalid_argument, "scheduler has not seen any frame");
    return f_key_;
  }

  std::vector<Detection> step(const Frame& frame) {
    require(frame.width == det_->arch.image_size && frame.height == det_->arch.image_size,
            errc::shape_mismatch, "scheduler: frame size does not match the model");
    StepDiagnostics diag;
    diag.frame_index = frame.frame_index;

    Tensor features;
    if (frames_seen_ == 0) {
      // opening frame is always a key frame
      features = refresh_key(frame);
      diag.key_path = true;
      diag.flops_charged = flops_.framewise();
    } else {
      switch (policy_.mode) {
        case SchedMode::all_key: {
          features = refresh_key(frame);
          diag.key_path = true;
          diag.flops_charged = flops_.framewise();
          break;
        }
        case SchedMode::fixed: {
          diag.key_path = baseline_decide(SchedMode::fixed, frame.frame_index, policy_.fixed_n,
                                          0, key_, frame, nullptr);
          if (diag.key_path) {
            features = refresh_key(frame);
            diag.flops_charged = flops_.framewise();
          } else {
            const Tensor m = motion_features(key_, frame, temporal_->motion);
            features = synth_features(m);
            diag.flops_charged = flops_.motion + synth_flops() + flops_.heads;
          }
          break;
        }
        case SchedMode::grey_corr: {
          const double stat = grey_mse(key_, frame);
          diag.s_i = stat;
          diag.key_path = stat > policy_.theta;
          if (diag.key_path) {
            features = refresh_key(frame);
            diag.flops_charged = flops_.grey_stat + flops_.framewise();
          } else {
            const Tensor m = motion_features(key_, frame, temporal_->motion);
            features = synth_features(m);
            diag.flops_charged = flops_.grey_stat + flops_.motion + synth_flops() + flops_.heads;
          }
          break;
        }
        case SchedMode::flow_corr: {
          const Tensor m = motion_features(key_, frame, temporal_->motion);
          const Tensor flow = temporal_->flow.forward(m);
          const double stat = mean_abs(flow);
          diag.s_i = stat;
          diag.key_path = stat > policy_.theta;
          const std::int64_t stat_cost = flops_.motion + flops_.flow_head + flops_.flow_stat;
          if (diag.key_path) {
            features = refresh_key(frame);
            diag.flops_charged = stat_cost + flops_.framewise();
          } else {
            features = synth_features(m);
            diag.flops_charged = stat_cost + synth_flops() + flops_.heads;
          }
          break;
        }
        case SchedMode::decision_net: {
          const Tensor m = motion_features(key_, frame, temporal_->motion);
          const double s = static_cast<double>(temporal_->decision.forward(m));
          diag.s_i = s;
          diag.key_path = s > policy_.tau;  // strictly larger; ties stay on the light path
          const std::int64_t stat_cost = flops_.motion + flops_.decision;
          if (diag.key_path) {
            features = refresh_key(frame);
            diag.flops_charged = stat_cost + flops_.framewise();
          } else {
            features = synth_features(m);
            diag.flops_charged = stat_cost + synth_flops() + flops_.heads;
          }
          break;
        }
      }
    }

    ++frames_seen_;
    if (diag.key_path) ++key_count_;
    log_.push_back(diag);
    return detect_features(*det_, det_cfg_, anchors_, features);
  }

 private:
  Tensor refresh_key(const Frame& frame) {
    key_ = frame;
    key_.boxes.reset();  // the cache never holds annotations
    f_key_ = det_->features(frame_to_tensor<float>(frame));
    return f_key_;
  }

  Tensor synth_features(const Tensor& motion) const {
    if (policy_.warp_mode == WarpMode::warpnet) return temporal_->warp.forward(f_key_, motion);
    return bilinear_warp(f_key_, temporal_->flow.forward(motion));
  }

  std::int64_t synth_flops() const {
    if (policy_.warp_mode == WarpMode::warpnet) return flops_.warp_net;
    return flops_.flow_head + flops_.bilinear_warp;
  }

  const DetectorNet<float>* det_;
  const TemporalNets<float>* temporal_;
  DetectorConfig det_cfg_;
  SchedPolicy policy_;
  AnchorSet anchors_;
  FlopModel flops_;

  Frame key_;
  Tensor f_key_;
  int frames_seen_ = 0;
  int key_count_ = 0;
  std::vector<StepDiagnostics> log_;
};

// Diagnostics rows as CSV: frame_index, path, s_i, flops_charged.
inline std::string diagnostics_csv(const std::vector<StepDiagnostics>& log) {
  std::ostringstream os;
  os << "frame_index,path,s_i,flops_charged\n";
  for (const auto& d : log) {
    os << d.frame_index << ',' << (d.key_path ? "key" : "nonkey") << ',';
    if (d.s_i) os << *d.s_i;
    os << ',' << d.flops_charged << '\n';
  }
  return os.str();
}

}  // namespace stcd
