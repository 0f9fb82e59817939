#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stcd/arch.hpp"
#include "stcd/detector.hpp"
#include "stcd/rng.hpp"
#include "stcd/scheduler.hpp"
#include "stcd/synthgen.hpp"
#include "stcd/training.hpp"

namespace stcd {

// Every tunable in one flat key=value namespace. Unknown keys are errors,
// parsing round-trips byte-deterministically, and one top-level seed feeds
// every stage through purpose-derived sub-seeds.
struct FullConfig {
  std::uint64_t seed = 1;
  int image_size = 64;

  GenConfig gen;
  ArchConfig arch;
  DetectorConfig det;
  DetectorTrainConfig det_train;
  TrainConfig train;

  double unlabeled_fraction = 1.0;  // portion of unlabeled videos used by train-stcd

  // evaluation / experiments
  double tau = 0.1;
  std::string mode = "decision_net";
  std::string warp_mode = "warpnet";
  double iou_thr = 0.5;
  int bench_repeats = 5;
  std::string tau_list;  // comma-separated; empty = quantile auto-sweep
  int sweep_points = 6;  // auto-sweep size when tau_list is empty

  // dataset sizes
  int n_stills_train = 500;
  int n_stills_test = 200;
  int n_videos_unlabeled = 16;
  int n_videos_test = 6;

  bool deterministic = true;  // reference single-threaded mode (the only mode)
  std::string results_dir = "results";

  void finalize() {
    gen.image_size = image_size;
    arch.image_size = image_size;
    gen.seed = seed;  // per-purpose sub-seeds are derived at the call sites
    det_train.seed = derive_seed("train_detector");
    train.seed = derive_seed("train_stcd");
    train.warp_mode = warp_mode_enum();
  }

  std::uint64_t derive_seed(std::string_view purpose) const {
    return RngStream(seed).derive(purpose).next_u64();
  }

  WarpMode warp_mode_enum() const {
    if (warp_mode == "warpnet") return WarpMode::warpnet;
    if (warp_mode == "bilinear") return WarpMode::bilinear;
    fail(errc::bad_config, "warp_mode must be warpnet or bilinear, got " + warp_mode);
  }

  SchedMode mode_enum() const { return sched_mode_from(mode); }

  void validate() const {
    gen.validate();
    arch.validate();
    det.validate();
    train.validate();
    require(unlabeled_fraction > 0 && unlabeled_fraction <= 1, errc::bad_config,
            "unlabeled_fraction must lie in (0,1]");
    require(iou_thr > 0 && iou_thr < 1, errc::bad_config, "iou_thr must lie in (0,1)");
    require(bench_repeats >= 3, errc::bad_config, "bench_repeats must be >= 3");
    require(sweep_points >= 2, errc::bad_config, "sweep_points must be >= 2");
    require(n_stills_train >= 1 && n_stills_test >= 1, errc::bad_config,
            "still counts must be >= 1");
    require(n_videos_unlabeled >= 1 && n_videos_test >= 1, errc::bad_config,
            "video counts must be >= 1");
    require(det_train.epochs >= 1 && det_train.batch_size >= 1, errc::bad_config,
            "detector training epochs/batch must be >= 1");
    (void)mode_enum();
    (void)warp_mode_enum();
  }

  std::vector<double> parse_tau_list() const {
    std::vector<double> taus;
    std::stringstream ss(tau_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      taus.push_back(std::stod(item));
    }
    return taus;
  }
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::string doc;
  std::function<std::string(const FullConfig&)> get;
  std::function<void(FullConfig&, const std::string&)> set;
};

inline std::string num_str(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

inline double parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    require(used == v.size(), errc::bad_config, "trailing characters in value for " + key);
    return d;
  } catch (const std::exception&) {
    fail(errc::bad_config, "key " + key + ": cannot parse number from '" + v + "'");
  }
}

inline const std::vector<ConfigKey>& config_registry() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> r;
    auto add_int = [&r](const std::string& name, const std::string& doc, auto getter) {
      r.push_back(ConfigKey{
          name, doc,
          [getter](const FullConfig& c) { return std::to_string(*getter(const_cast<FullConfig&>(c))); },
          [getter, name](FullConfig& c, const std::string& v) {
            const double d = parse_num(name, v);
            require(d == static_cast<long long>(d), errc::bad_config, name + " must be an integer");
            *getter(c) = static_cast<int>(d);
          }});
    };
    auto add_dbl = [&r](const std::string& name, const std::string& doc, auto getter) {
      r.push_back(ConfigKey{
          name, doc,
          [getter](const FullConfig& c) { return num_str(*getter(const_cast<FullConfig&>(c))); },
          [getter, name](FullConfig& c, const std::string& v) { *getter(c) = parse_num(name, v); }});
    };
    auto add_u64 = [&r](const std::string& name, const std::string& doc, auto getter) {
      r.push_back(ConfigKey{
          name, doc,
          [getter](const FullConfig& c) { return std::to_string(*getter(const_cast<FullConfig&>(c))); },
          [getter, name](FullConfig& c, const std::string& v) {
            try {
              *getter(c) = std::stoull(v);
            } catch (const std::exception&) {
              fail(errc::bad_config, "key " + name + ": cannot parse unsigned from '" + v + "'");
            }
          }});
    };
    auto add_str = [&r](const std::string& name, const std::string& doc, auto getter) {
      r.push_back(ConfigKey{
          name, doc,
          [getter](const FullConfig& c) { return *getter(const_cast<FullConfig&>(c)); },
          [getter](FullConfig& c, const std::string& v) { *getter(c) = v; }});
    };
    auto add_bool = [&r](const std::string& name, const std::string& doc, auto getter) {
      r.push_back(ConfigKey{
          name, doc,
          [getter](const FullConfig& c) {
            return *getter(const_cast<FullConfig&>(c)) ? std::string("true") : std::string("false");
          },
          [getter, name](FullConfig& c, const std::string& v) {
            if (v == "true" || v == "1") *getter(c) = true;
            else if (v == "false" || v == "0") *getter(c) = false;
            else fail(errc::bad_config, "key " + name + ": expected true/false, got '" + v + "'");
          }});
    };

    add_u64("seed", "master seed; all stages derive purpose-specific sub-seeds",
            [](FullConfig& c) { return &c.seed; });
    add_int("image_size", "frame side length in pixels", [](FullConfig& c) { return &c.image_size; });

    // generator
    add_int("lesion_count_min", "min lesions per frame", [](FullConfig& c) { return &c.gen.lesion_count_min; });
    add_int("lesion_count_max", "max lesions per frame", [](FullConfig& c) { return &c.gen.lesion_count_max; });
    add_dbl("lesion_radius_min", "min lesion radius, px", [](FullConfig& c) { return &c.gen.lesion_radius_min; });
    add_dbl("lesion_radius_max", "max lesion radius, px", [](FullConfig& c) { return &c.gen.lesion_radius_max; });
    add_dbl("contrast_min", "min lesion contrast, grey levels", [](FullConfig& c) { return &c.gen.contrast_min; });
    add_dbl("contrast_max", "max lesion contrast, grey levels", [](FullConfig& c) { return &c.gen.contrast_max; });
    add_int("speckle_kernel", "box kernel width for texture smoothing, px (odd)",
            [](FullConfig& c) { return &c.gen.speckle_kernel; });
    add_dbl("speckle_amplitude", "texture noise swing, grey levels",
            [](FullConfig& c) { return &c.gen.speckle_amplitude; });
    add_dbl("base_level_min", "min background level, grey", [](FullConfig& c) { return &c.gen.base_level_min; });
    add_dbl("base_level_max", "max background level, grey", [](FullConfig& c) { return &c.gen.base_level_max; });
    add_dbl("motion_max_step", "max per-axis lesion step, px/frame",
            [](FullConfig& c) { return &c.gen.motion_max_step; });
    add_dbl("motion_sigma", "std of the random-walk step, px", [](FullConfig& c) { return &c.gen.motion_sigma; });
    add_dbl("p_blur", "per-frame blur probability", [](FullConfig& c) { return &c.gen.p_blur; });
    add_dbl("p_contrast_match", "per-frame contrast-match probability",
            [](FullConfig& c) { return &c.gen.p_contrast_match; });
    add_dbl("blur_sigma", "gaussian blur sigma, px", [](FullConfig& c) { return &c.gen.blur_sigma; });
    add_dbl("contrast_lambda", "contrast-match pull factor in [0,1]",
            [](FullConfig& c) { return &c.gen.contrast_lambda; });
    add_int("seq_len_min", "min video length, frames", [](FullConfig& c) { return &c.gen.seq_len_min; });
    add_int("seq_len_max", "max video length, frames", [](FullConfig& c) { return &c.gen.seq_len_max; });

    // detector inference + matching
    add_dbl("pos_thr", "anchor IoU for a positive match", [](FullConfig& c) { return &c.det.pos_thr; });
    add_dbl("neg_thr", "anchor IoU below which an anchor is negative",
            [](FullConfig& c) { return &c.det.neg_thr; });
    add_dbl("score_thr", "min detection score kept before NMS", [](FullConfig& c) { return &c.det.score_thr; });
    add_dbl("nms_iou", "NMS suppression IoU", [](FullConfig& c) { return &c.det.nms_iou; });
    add_int("max_dets", "max detections per frame", [](FullConfig& c) { return &c.det.max_dets; });
    add_dbl("focal_alpha", "focal loss alpha", [](FullConfig& c) { return &c.det.focal_alpha; });
    add_dbl("focal_gamma", "focal loss gamma", [](FullConfig& c) { return &c.det.focal_gamma; });
    add_dbl("smooth_l1_beta", "box regression transition point",
            [](FullConfig& c) { return &c.det.smooth_l1_beta; });

    // detector training
    add_int("det_epochs", "supervised training epochs", [](FullConfig& c) { return &c.det_train.epochs; });
    add_int("det_batch_size", "supervised batch size", [](FullConfig& c) { return &c.det_train.batch_size; });
    add_dbl("det_lr", "supervised learning rate", [](FullConfig& c) { return &c.det_train.lr; });
    add_dbl("det_lr_decay", "supervised per-epoch lr multiplier",
            [](FullConfig& c) { return &c.det_train.lr_decay; });
    add_dbl("cls_bias_init", "initial classification bias (objectness prior)",
            [](FullConfig& c) { return &c.det_train.cls_bias_init; });

    // temporal training
    add_dbl("key_fraction", "fraction of frames sampled as key frames",
            [](FullConfig& c) { return &c.train.key_fraction; });
    add_int("max_offset", "max |key - partner| distance, frames",
            [](FullConfig& c) { return &c.train.max_offset; });
    add_int("warmup_epochs", "mimic-only epochs before the regressor joins",
            [](FullConfig& c) { return &c.train.warmup_epochs; });
    add_int("total_epochs", "total temporal training epochs", [](FullConfig& c) { return &c.train.total_epochs; });
    add_int("batch_size", "temporal training batch size", [](FullConfig& c) { return &c.train.batch_size; });
    add_dbl("lr_decision", "regressor base lr (after warm-up)", [](FullConfig& c) { return &c.train.lr_decision; });
    add_dbl("lr_motion", "motion encoder base lr", [](FullConfig& c) { return &c.train.lr_motion; });
    add_dbl("lr_warp", "warp branch base lr", [](FullConfig& c) { return &c.train.lr_warp; });
    add_dbl("lr_decay", "temporal per-epoch lr multiplier", [](FullConfig& c) { return &c.train.lr_decay; });
    add_dbl("unlabeled_fraction", "portion of unlabeled videos used for training",
            [](FullConfig& c) { return &c.unlabeled_fraction; });

    // evaluation / experiments
    add_dbl("tau", "key-frame refresh threshold on the predicted score",
            [](FullConfig& c) { return &c.tau; });
    add_str("mode", "scheduling policy: decision_net|fixed|grey_corr|flow_corr|all_key",
            [](FullConfig& c) { return &c.mode; });
    add_str("warp_mode", "non-key feature synthesis: warpnet|bilinear",
            [](FullConfig& c) { return &c.warp_mode; });
    add_dbl("iou_thr", "evaluation IoU threshold", [](FullConfig& c) { return &c.iou_thr; });
    add_int("bench_repeats", "timed passes for the runtime benchmark",
            [](FullConfig& c) { return &c.bench_repeats; });
    add_str("tau_list", "comma-separated sweep thresholds; empty = auto quantiles",
            [](FullConfig& c) { return &c.tau_list; });
    add_int("sweep_points", "auto-sweep size when tau_list is empty",
            [](FullConfig& c) { return &c.sweep_points; });

    // dataset sizes
    add_int("n_stills_train", "labeled training stills", [](FullConfig& c) { return &c.n_stills_train; });
    add_int("n_stills_test", "held-out labeled stills", [](FullConfig& c) { return &c.n_stills_test; });
    add_int("n_videos_unlabeled", "unlabeled training sequences",
            [](FullConfig& c) { return &c.n_videos_unlabeled; });
    add_int("n_videos_test", "labeled test sequences", [](FullConfig& c) { return &c.n_videos_test; });

    add_bool("deterministic", "single-threaded reference mode",
             [](FullConfig& c) { return &c.deterministic; });
    add_str("results_dir", "experiment output root (env STCD_RESULTS_DIR overrides)",
            [](FullConfig& c) { return &c.results_dir; });
    return r;
  }();
  return keys;
}

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_registry())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace detail

inline void apply_config_line(FullConfig& cfg, const std::string& line_in) {
  std::string line = line_in;
  if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  };
  line = trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  require(eq != std::string::npos, errc::bad_config, "expected key=value, got '" + line + "'");
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  const auto* entry = detail::find_key(key);
  require(entry != nullptr, errc::bad_config, "unknown config key '" + key + "'");
  entry->set(cfg, value);
}

// Defaults, then the file, then explicit overrides; validated at the end.
inline FullConfig parse_config(const std::filesystem::path* file,
                               const std::vector<std::string>& overrides) {
  FullConfig cfg;
  if (file) {
    std::ifstream is(*file);
    require(is.good(), errc::io_missing_file, "cannot read config file: " + file->string());
    std::string line;
    while (std::getline(is, line)) apply_config_line(cfg, line);
  }
  for (const auto& o : overrides) apply_config_line(cfg, o);
  cfg.finalize();
  cfg.validate();
  return cfg;
}

// Canonical echo: sorted key=value lines. Identical configs print identical
// bytes; the hash of this text identifies the run.
inline std::string echo_config(const FullConfig& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& k : detail::config_registry()) kv[k.name] = k.get(cfg);
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

inline std::uint64_t config_hash(const FullConfig& cfg) {
  const std::string echo = echo_config(cfg);
  return fnv1a64(echo.data(), echo.size());
}

inline std::string config_docs() {
  std::string out;
  FullConfig defaults;
  for (const auto& k : detail::config_registry()) {
    out += k.name;
    out += " (default ";
    out += k.get(defaults);
    out += "): ";
    out += k.doc;
    out += '\n';
  }
  return out;
}

}  // namespace stcd
