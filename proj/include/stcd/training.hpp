#pragma once

#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "stcd/checkpoint.hpp"
#include "stcd/detector.hpp"
#include "stcd/scheduler.hpp"
#include "stcd/synthgen.hpp"
#include "stcd/temporal.hpp"

namespace stcd {

struct TrainConfig {
  double key_fraction = 1.0 / 3.0;
  int max_offset = 20;
  int warmup_epochs = 10;   // feature-mimic only; the regressor joins afterwards
  int total_epochs = 15;
  int batch_size = 16;
  double lr_decision = 0.001;  // activated after warm-up
  double lr_motion = 0.001;
  double lr_warp = 0.001;
  double lr_decay = 0.9;  // per-epoch multiplier
  AdamConfig adam;
  WarpMode warp_mode = WarpMode::warpnet;
  std::uint64_t seed = 1;

  void validate() const {
    require(key_fraction > 0 && key_fraction <= 1, errc::bad_config,
            "key_fraction must lie in (0,1]");
    require(max_offset >= 1, errc::bad_config, "max_offset must be >= 1");
    require(warmup_epochs >= 0 && total_epochs >= warmup_epochs, errc::bad_config,
            "need 0 <= warmup_epochs <= total_epochs");
    require(batch_size >= 1, errc::bad_config, "batch_size must be >= 1");
    require(lr_decision >= 0 && lr_motion >= 0 && lr_warp >= 0, errc::bad_config,
            "learning rates must be >= 0");
    require(lr_decay > 0 && lr_decay <= 1, errc::bad_config, "lr_decay must lie in (0,1]");
  }
};

struct TrainingPair {
  int seq = 0;  // index into the video list
  std::string seq_id;
  int key_frame = 0;
  int other_frame = 0;
  int offset = 0;  // signed: other_frame - key_frame, |offset| <= max_offset
};

// Per sequence: floor(key_fraction * length) key frames drawn without
// replacement, each paired with a uniformly drawn partner within max_offset
// frames (either direction, in bounds).
inline std::vector<TrainingPair> sample_pairs(const std::vector<VideoSequence>& videos,
                                              const TrainConfig& cfg) {
  cfg.validate();
  std::vector<TrainingPair> out;
  const RngStream base = RngStream(cfg.seed).derive("pairs");
  for (std::size_t s = 0; s < videos.size(); ++s) {
    const auto& v = videos[s];
    const int len = static_cast<int>(v.frames.size());
    require(len >= cfg.max_offset + 1, errc::invalid_argument,
            "sequence " + v.seq_id + " is too short: " + std::to_string(len) +
                " frames, need at least " + std::to_string(cfg.max_offset + 1));
    RngStream rng = base.derive(v.seq_id);
    const int n_keys = static_cast<int>(cfg.key_fraction * len);
    std::vector<int> idx(static_cast<std::size_t>(len));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = len - 1; i > 0; --i)
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    idx.resize(static_cast<std::size_t>(n_keys));
    std::sort(idx.begin(), idx.end());
    for (int key : idx) {
      std::vector<int> offsets;
      for (int o = -cfg.max_offset; o <= cfg.max_offset; ++o) {
        if (o == 0) continue;
        const int partner = key + o;
        if (partner >= 0 && partner < len) offsets.push_back(o);
      }
      const int o = offsets[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(offsets.size())))];
      out.push_back(TrainingPair{static_cast<int>(s), v.seq_id, key, key + o, o});
    }
  }
  return out;
}

struct LrTriple {
  double decision = 0, motion = 0, warp = 0;
};

// Warm-up keeps the regressor frozen at lr 0 while the motion and warp
// branches train; every active rate decays by the per-epoch factor. The
// regressor starts from its base rate when it joins.
inline LrTriple lr_schedule(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0, errc::invalid_argument, "epoch must be >= 0");
  LrTriple lr;
  lr.motion = cfg.lr_motion * std::pow(cfg.lr_decay, epoch);
  lr.warp = cfg.lr_warp * std::pow(cfg.lr_decay, epoch);
  lr.decision =
      epoch < cfg.warmup_epochs ? 0.0 : cfg.lr_decision * std::pow(cfg.lr_decay, epoch - cfg.warmup_epochs);
  return lr;
}

struct StcdTrainResult {
  TemporalNets<float> nets;
  std::vector<double> epoch_feat_loss;
  std::vector<double> epoch_dec_loss;  // zero during warm-up epochs
};

// Semi-supervised training against a frozen detector: warp the key-frame
// features toward the true features of the paired frame (feature mimicking),
// then jointly regress the mismatch score. The detector itself is read-only
// throughout.
inline StcdTrainResult train_stcd(const std::vector<VideoSequence>& videos,
                                  const DetectorNet<float>& detector, const TrainConfig& cfg) {
  cfg.validate();
  const auto pairs = sample_pairs(videos, cfg);
  require(!pairs.empty(), errc::invalid_argument, "train_stcd: no training pairs");

  StcdTrainResult result{TemporalNets<float>::init(detector.arch,
                                                   RngStream(cfg.seed).derive("temporal_init")),
                         {}, {}};
  auto& nets = result.nets;

  // Frozen-backbone features for every referenced frame, computed once.
  std::map<std::pair<int, int>, Tensor> feat_cache;
  for (const auto& p : pairs)
    for (int fi : {p.key_frame, p.other_frame}) {
      const auto key = std::make_pair(p.seq, fi);
      if (!feat_cache.count(key))
        feat_cache[key] = detector.features(frame_to_tensor<float>(
            videos[static_cast<std::size_t>(p.seq)].frames[static_cast<std::size_t>(fi)]));
    }

  auto motion_params = nets.motion.params();
  auto warp_params = cfg.warp_mode == WarpMode::warpnet ? nets.warp.params() : nets.flow.params();
  auto decision_params = nets.decision.params();

  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream shuffle_rng = RngStream(cfg.seed).derive("stcd_shuffle");

  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const LrTriple lr = lr_schedule(epoch, cfg);
    const bool joint = epoch >= cfg.warmup_epochs;
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);

    double feat_sum = 0, dec_sum = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      zero_grads(motion_params);
      zero_grads(warp_params);
      zero_grads(decision_params);

      for (std::size_t bi = start; bi < end; ++bi) {
        const auto& p = pairs[static_cast<std::size_t>(order[bi])];
        const auto& seq = videos[static_cast<std::size_t>(p.seq)];
        const Frame& key_frame = seq.frames[static_cast<std::size_t>(p.key_frame)];
        const Frame& other_frame = seq.frames[static_cast<std::size_t>(p.other_frame)];
        const Tensor& f_key = feat_cache[{p.seq, p.key_frame}];
        const Tensor& f_other = feat_cache[{p.seq, p.other_frame}];

        auto m_trace = nets.motion.forward_traced(frame_pair_tensor<float>(key_frame, other_frame));
        Tensor g_motion;
        float q = 0;
        if (cfg.warp_mode == WarpMode::warpnet) {
          auto w_trace = nets.warp.forward_traced(f_key, m_trace.out);
          q = correlation_score(w_trace.out, f_other);
          Tensor g_warp_out = correlation_score_backward(w_trace.out, f_other, inv_batch);
          auto [g_fkey, g_m] = nets.warp.backward(w_trace, g_warp_out);
          (void)g_fkey;  // the key features are frozen inputs
          g_motion = std::move(g_m);
        } else {
          Tensor flow = nets.flow.forward(m_trace.out);
          Tensor warped = bilinear_warp(f_key, flow);
          q = correlation_score(warped, f_other);
          Tensor g_warped = correlation_score_backward(warped, f_other, inv_batch);
          auto g = bilinear_warp_backward(f_key, flow, g_warped);
          g_motion = nets.flow.backward(m_trace.out, g.flow);
        }
        feat_sum += q;

        if (joint) {
          auto d_trace = nets.decision.forward_traced(m_trace.out);
          const float s = d_trace.score;
          dec_sum += decision_loss(q, s);
          // the measured mismatch is a constant target: only the regressor learns
          nets.decision.backward(d_trace, decision_loss_backward_s(q, s, inv_batch));
        }
        nets.motion.backward(m_trace, g_motion);
        ++seen;
      }

      for (auto* g : motion_params) adam_step(*g, static_cast<float>(lr.motion), cfg.adam);
      for (auto* g : warp_params) adam_step(*g, static_cast<float>(lr.warp), cfg.adam);
      if (joint)
        for (auto* g : decision_params) adam_step(*g, static_cast<float>(lr.decision), cfg.adam);
    }
    result.epoch_feat_loss.push_back(feat_sum / static_cast<double>(seen));
    result.epoch_dec_loss.push_back(joint ? dec_sum / static_cast<double>(seen) : 0.0);
  }
  return result;
}

}  // namespace stcd
