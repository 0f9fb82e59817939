#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcd/error.hpp"
#include "stcd/frame.hpp"
#include "stcd/rng.hpp"

namespace stcd {

// Generator settings for ultrasound-like grayscale frames: smoothed-noise
// texture, soft-edged elliptic lesions, bounded random-walk motion and the
// two corruption modes (blur, contrast matching).
struct GenConfig {
  int image_size = 64;
  int lesion_count_min = 1;
  int lesion_count_max = 2;
  double lesion_radius_min = 6.0;
  double lesion_radius_max = 14.0;
  double contrast_min = 30.0;
  double contrast_max = 60.0;
  int speckle_kernel = 5;           // box-filter width for texture smoothing
  double speckle_amplitude = 22.0;  // noise swing around the base level
  double base_level_min = 100.0;
  double base_level_max = 150.0;
  double motion_max_step = 2.0;  // max per-axis center step, px/frame
  double motion_sigma = 1.2;
  double p_blur = 0.15;
  double p_contrast_match = 0.15;
  double blur_sigma = 2.0;
  double contrast_lambda = 0.9;
  int seq_len_min = 40;
  int seq_len_max = 80;
  int drift_pad = 10;  // max viewport travel per axis in a sequence, px
  std::uint64_t seed = 1;

  void validate() const {
    require(image_size >= 16, errc::bad_config, "image_size must be >= 16");
    require(lesion_count_min >= 1 && lesion_count_max >= lesion_count_min, errc::bad_config,
            "lesion count range is empty");
    require(lesion_radius_min > 1.0 && lesion_radius_max >= lesion_radius_min, errc::bad_config,
            "lesion radius range is empty");
    require(2.0 * lesion_radius_max + 6.0 < image_size, errc::bad_config,
            "lesion radius too large for the image size");
    require(contrast_max >= contrast_min && contrast_min >= 0, errc::bad_config,
            "contrast range is empty");
    require(speckle_kernel >= 1 && speckle_kernel % 2 == 1, errc::bad_config,
            "speckle_kernel must be odd and positive");
    require(p_blur >= 0 && p_blur <= 1 && p_contrast_match >= 0 && p_contrast_match <= 1,
            errc::bad_config, "corruption probabilities must be in [0,1]");
    require(p_blur + p_contrast_match <= 1.0, errc::bad_config,
            "corruption probabilities must sum to <= 1");
    require(blur_sigma >= 0, errc::bad_config, "blur_sigma must be >= 0");
    require(contrast_lambda >= 0 && contrast_lambda <= 1, errc::bad_config,
            "contrast_lambda must be in [0,1]");
    require(seq_len_min >= 2 && seq_len_max >= seq_len_min, errc::bad_config,
            "sequence length range is empty");
    require(motion_max_step >= 0, errc::bad_config, "motion_max_step must be >= 0");
    require(drift_pad >= 0, errc::bad_config, "drift_pad must be >= 0");
    require(image_size - 2.0 * lesion_radius_max - 4.0 - 2.0 * drift_pad >= 1.0, errc::bad_config,
            "drift_pad leaves no room to place lesions visible at every drift offset");
  }
};

struct VideoSequence {
  std::string seq_id;
  std::vector<Frame> frames;
  bool labeled = true;
  // per-frame generation metadata; not part of the annotation contract
  std::vector<std::uint8_t> corrupted;
};

namespace detail {

struct Lesion {
  double cx, cy, rx, ry;
  double contrast;  // signed: negative = darker than background
};

// support weight in [0,1]; zero outside the ellipse
inline double lesion_weight(const Lesion& l, int x, int y) {
  const double dx = (x + 0.5 - l.cx) / l.rx;
  const double dy = (y + 0.5 - l.cy) / l.ry;
  const double d2 = dx * dx + dy * dy;
  if (d2 >= 1.0) return 0.0;
  return std::pow(1.0 - d2, 0.75);
}

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

// smoothed uniform noise around a base level, over an n x n grid
inline std::vector<double> speckle_field_n(const GenConfig& cfg, RngStream& rng, double base,
                                           int n) {
  std::vector<double> raw(static_cast<std::size_t>(n) * n);
  for (auto& v : raw) v = rng.uniform(-1.0, 1.0);
  std::vector<double> out(raw.size());
  const int r = cfg.speckle_kernel / 2;
  // two-pass box filter with border renormalization
  std::vector<double> tmp(raw.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0;
      int cnt = 0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= n) continue;
        s += raw[static_cast<std::size_t>(y) * n + xx];
        ++cnt;
      }
      tmp[static_cast<std::size_t>(y) * n + x] = s / cnt;
    }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0;
      int cnt = 0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= n) continue;
        s += tmp[static_cast<std::size_t>(yy) * n + x];
        ++cnt;
      }
      out[static_cast<std::size_t>(y) * n + x] = base + cfg.speckle_amplitude * (s / cnt);
    }
  return out;
}

inline std::vector<double> speckle_field(const GenConfig& cfg, RngStream& rng, double base) {
  return speckle_field_n(cfg, rng, base, cfg.image_size);
}

// Exact bounding rectangle of the rendered support (pixels with weight > 0).
inline GroundTruthBox support_box(const Lesion& l, int image_size) {
  int x0 = image_size, y0 = image_size, x1 = -1, y1 = -1;
  const int sx = std::max(0, static_cast<int>(std::floor(l.cx - l.rx)) - 1);
  const int ex = std::min(image_size - 1, static_cast<int>(std::ceil(l.cx + l.rx)) + 1);
  const int sy = std::max(0, static_cast<int>(std::floor(l.cy - l.ry)) - 1);
  const int ey = std::min(image_size - 1, static_cast<int>(std::ceil(l.cy + l.ry)) + 1);
  for (int y = sy; y <= ey; ++y)
    for (int x = sx; x <= ex; ++x)
      if (lesion_weight(l, x, y) > 0.0) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  require(x1 >= x0 && y1 >= y0, errc::invalid_argument, "lesion renders to empty support");
  return GroundTruthBox{x0, y0, x1 + 1, y1 + 1};
}

inline Frame render_frame_on(const GenConfig& cfg, const std::vector<Lesion>& lesions,
                             std::vector<double> field) {
  const int n = cfg.image_size;
  for (const auto& l : lesions)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double w = lesion_weight(l, x, y);
        if (w > 0.0) field[static_cast<std::size_t>(y) * n + x] += l.contrast * w;
      }
  Frame f;
  f.width = n;
  f.height = n;
  f.pixels.resize(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) f.pixels[i] = to_u8(field[i]);
  std::vector<GroundTruthBox> boxes;
  for (const auto& l : lesions) boxes.push_back(support_box(l, n));
  f.boxes = std::move(boxes);
  f.check();
  return f;
}

inline Frame render_frame(const GenConfig& cfg, const std::vector<Lesion>& lesions,
                          RngStream& rng, double base) {
  return render_frame_on(cfg, lesions, speckle_field(cfg, rng, base));
}

// margin: extra border (beyond the radius) each center keeps from the
// placement region edges. For stills the region is the frame itself; for
// sequences it is shrunk so the lesion stays in view at every drift offset.
inline std::vector<Lesion> place_lesions(const GenConfig& cfg, RngStream& rng, double lo_extra = 0,
                                         double hi_extra = 0) {
  const int count = cfg.lesion_count_min + rng.uniform_int(cfg.lesion_count_max -
                                                           cfg.lesion_count_min + 1);
  std::vector<Lesion> out;
  for (int i = 0; i < count; ++i) {
    Lesion l{};
    for (int attempt = 0;; ++attempt) {
      l.rx = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
      l.ry = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
      const double mx = l.rx + 2.0, my = l.ry + 2.0;
      l.cx = rng.uniform(mx + lo_extra, cfg.image_size - mx - hi_extra);
      l.cy = rng.uniform(my + lo_extra, cfg.image_size - my - hi_extra);
      bool clear = true;
      for (const auto& o : out) {
        const double dx = l.cx - o.cx, dy = l.cy - o.cy;
        const double min_sep = std::max(l.rx, l.ry) + std::max(o.rx, o.ry) + 6.0;
        if (dx * dx + dy * dy < min_sep * min_sep) clear = false;
      }
      if (clear) break;
      if (attempt > 200) return out;  // give up on extra lesions in a crowded frame
    }
    const double mag = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    l.contrast = rng.uniform() < 0.7 ? -mag : mag;  // lesions are usually darker
    out.push_back(l);
  }
  return out;
}

inline std::uint64_t file_checksum(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  require(is.good(), errc::io_missing_file, "missing file: " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a64(bytes.data(), bytes.size());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

// --------------------------------------------------------------------------
// Frame corruption.
// --------------------------------------------------------------------------

enum class CorruptMode { blur, contrast_match };

inline Frame corrupt_frame(const Frame& frame, CorruptMode mode, double param) {
  frame.check();
  Frame out = frame;
  const int n = frame.width;
  if (mode == CorruptMode::blur) {
    const double sigma = param;
    require(sigma >= 0, errc::invalid_argument, "blur: sigma must be >= 0");
    if (sigma == 0.0) return out;
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    // separable passes with border renormalization (preserves flat signals)
    std::vector<double> a(frame.pixels.begin(), frame.pixels.end());
    std::vector<double> b(a.size());
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < n; ++x) {
        double s = 0, wsum = 0;
        for (int i = -r; i <= r; ++i) {
          const int xx = x + i;
          if (xx < 0 || xx >= n) continue;
          s += k[static_cast<std::size_t>(i + r)] * a[static_cast<std::size_t>(y) * n + xx];
          wsum += k[static_cast<std::size_t>(i + r)];
        }
        b[static_cast<std::size_t>(y) * n + x] = s / wsum;
      }
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < n; ++x) {
        double s = 0, wsum = 0;
        for (int i = -r; i <= r; ++i) {
          const int yy = y + i;
          if (yy < 0 || yy >= frame.height) continue;
          s += k[static_cast<std::size_t>(i + r)] * b[static_cast<std::size_t>(yy) * n + x];
          wsum += k[static_cast<std::size_t>(i + r)];
        }
        out.pixels[static_cast<std::size_t>(y) * n + x] = detail::to_u8(s / wsum);
      }
    return out;
  }

  // contrast_match: pull each lesion interior toward its local background mean
  const double lambda = param;
  require(lambda >= 0 && lambda <= 1, errc::invalid_argument,
          "contrast_match: lambda must be in [0,1]");
  if (!frame.boxes) return out;
  for (const auto& box : *frame.boxes) {
    // background = ring around the box
    const int ring = 4;
    double bg = 0;
    int cnt = 0;
    for (int y = std::max(0, box.y0 - ring); y < std::min(frame.height, box.y1 + ring); ++y)
      for (int x = std::max(0, box.x0 - ring); x < std::min(n, box.x1 + ring); ++x) {
        if (x >= box.x0 && x < box.x1 && y >= box.y0 && y < box.y1) continue;
        bg += frame.px(y, x);
        ++cnt;
      }
    if (cnt == 0) continue;
    bg /= cnt;
    // interior = ellipse inscribed in the box
    const double cx = 0.5 * (box.x0 + box.x1), cy = 0.5 * (box.y0 + box.y1);
    const double rx = 0.5 * (box.x1 - box.x0), ry = 0.5 * (box.y1 - box.y0);
    for (int y = box.y0; y < box.y1; ++y)
      for (int x = box.x0; x < box.x1; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        if (dx * dx + dy * dy >= 1.0) continue;
        const double p = frame.px(y, x);
        out.px(y, x) = detail::to_u8(p + lambda * (bg - p));
      }
  }
  return out;
}

// --------------------------------------------------------------------------
// Generation.
// --------------------------------------------------------------------------

inline std::vector<Frame> gen_stills(const GenConfig& cfg, int n) {
  cfg.validate();
  require(n >= 1, errc::invalid_argument, "gen_stills: n must be >= 1");
  RngStream rng = RngStream(cfg.seed).derive("stills");
  std::vector<Frame> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RngStream frame_rng = rng.derive("still_" + std::to_string(i));
    const double base = frame_rng.uniform(cfg.base_level_min, cfg.base_level_max);
    auto lesions = detail::place_lesions(cfg, frame_rng);
    Frame f = detail::render_frame(cfg, lesions, frame_rng, base);
    f.frame_index = i;
    const double u = frame_rng.uniform();
    if (u < cfg.p_blur) {
      f = corrupt_frame(f, CorruptMode::blur, cfg.blur_sigma);
    } else if (u < cfg.p_blur + cfg.p_contrast_match) {
      f = corrupt_frame(f, CorruptMode::contrast_match, cfg.contrast_lambda);
    }
    out.push_back(std::move(f));
  }
  return out;
}

// A sequence is a viewport sweeping over a fixed tissue field, the way a
// probe glides over anatomy: texture and lesions are anchored to the field
// and the whole view translates by a bounded integer random walk. Stills
// instead draw an independent field per image.
inline VideoSequence gen_sequence(const GenConfig& cfg, const std::string& seq_id) {
  cfg.validate();
  RngStream rng = RngStream(cfg.seed).derive("seq_" + seq_id);
  const int len = cfg.seq_len_min + rng.uniform_int(cfg.seq_len_max - cfg.seq_len_min + 1);
  const double base = rng.uniform(cfg.base_level_min, cfg.base_level_max);
  const int pad = cfg.drift_pad;
  const int field_n = cfg.image_size + 2 * pad;

  // lesions in viewport coordinates of the centered offset; constrained so
  // they stay fully in frame for every reachable offset
  auto lesions = detail::place_lesions(cfg, rng, pad, pad);
  const std::vector<double> texture = detail::speckle_field_n(cfg, rng, base, field_n);

  VideoSequence seq;
  seq.seq_id = seq_id;
  seq.labeled = true;
  int ox = pad, oy = pad;  // viewport offset into the field, starts centered
  const long max_step = static_cast<long>(std::floor(cfg.motion_max_step));
  std::vector<double> window(static_cast<std::size_t>(cfg.image_size) * cfg.image_size);
  for (int i = 0; i < len; ++i) {
    for (int y = 0; y < cfg.image_size; ++y)
      for (int x = 0; x < cfg.image_size; ++x)
        window[static_cast<std::size_t>(y) * cfg.image_size + x] =
            texture[static_cast<std::size_t>(y + oy) * field_n + (x + ox)];
    // lesions were placed for the centered viewport; shift by the drift
    std::vector<detail::Lesion> in_frame = lesions;
    for (auto& l : in_frame) {
      l.cx += static_cast<double>(pad - ox);
      l.cy += static_cast<double>(pad - oy);
    }
    Frame f = detail::render_frame_on(cfg, in_frame, window);
    f.frame_index = i;
    bool corrupted = false;
    if (i > 0) {  // keep the opening frame clean; it seeds any streaming consumer
      const double u = rng.uniform();
      if (u < cfg.p_blur) {
        f = corrupt_frame(f, CorruptMode::blur, cfg.blur_sigma);
        corrupted = true;
      } else if (u < cfg.p_blur + cfg.p_contrast_match) {
        f = corrupt_frame(f, CorruptMode::contrast_match, cfg.contrast_lambda);
        corrupted = true;
      }
    }
    seq.frames.push_back(std::move(f));
    seq.corrupted.push_back(corrupted ? 1 : 0);

    // whole-pixel viewport steps: boxes translate exactly, per-axis move
    // stays <= motion_max_step
    auto step_for = [&](int o, double want) {
      long s = std::clamp(std::lround(want), -max_step, max_step);
      return static_cast<int>(std::clamp<long>(o + s, 0, 2l * pad)) - o;
    };
    ox += step_for(ox, rng.normal(0.0, cfg.motion_sigma));
    oy += step_for(oy, rng.normal(0.0, cfg.motion_sigma));
  }
  return seq;
}

// Public view of an unlabeled sequence: annotations removed.
inline VideoSequence strip_labels(VideoSequence seq) {
  seq.labeled = false;
  for (auto& f : seq.frames) f.boxes.reset();
  return seq;
}

// --------------------------------------------------------------------------
// Dataset IO. One directory per sequence: frame_%05d.pgm plus manifest.json
// {seq_id, num_frames, labeled, annotations, corrupted, checksums}. Stills:
// images/ directory plus annotations.json mapping filename -> box list.
// --------------------------------------------------------------------------

namespace fs = std::filesystem;

inline std::string frame_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.pgm", index);
  return buf;
}

inline void write_sequence(const fs::path& root, const VideoSequence& seq) {
  const fs::path dir = root / seq.seq_id;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["seq_id"] = seq.seq_id;
  manifest["num_frames"] = seq.frames.size();
  manifest["labeled"] = seq.labeled;
  nlohmann::json anns = nlohmann::json::array();
  nlohmann::json sums = nlohmann::json::array();
  nlohmann::json corr = nlohmann::json::array();
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    const fs::path fp = dir / frame_filename(static_cast<int>(i));
    write_pgm(fp, f);
    sums.push_back(detail::hex64(detail::file_checksum(fp)));
    if (seq.labeled && f.boxes) {
      nlohmann::json fb = nlohmann::json::array();
      for (const auto& b : *f.boxes) fb.push_back({b.x0, b.y0, b.x1, b.y1});
      anns.push_back(fb);
    } else {
      anns.push_back(nullptr);
    }
    corr.push_back(i < seq.corrupted.size() ? seq.corrupted[i] != 0 : false);
  }
  manifest["annotations"] = anns;
  manifest["checksums"] = sums;
  manifest["corrupted"] = corr;
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  os << manifest.dump(2) << "\n";
  require(os.good(), errc::io_truncated, "short write: " + (dir / "manifest.json").string());
}

inline VideoSequence read_sequence(const fs::path& dir) {
  const fs::path mf = dir / "manifest.json";
  std::ifstream is(mf, std::ios::binary);
  require(is.good(), errc::io_missing_file, "missing manifest: " + mf.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io_bad_manifest, "malformed manifest " + mf.string() + ": " + e.what());
  }
  VideoSequence seq;
  try {
    seq.seq_id = manifest.at("seq_id").get<std::string>();
    seq.labeled = manifest.at("labeled").get<bool>();
    const auto num_frames = manifest.at("num_frames").get<std::size_t>();
    const auto& anns = manifest.at("annotations");
    require(anns.is_array() && anns.size() == num_frames, errc::io_bad_manifest,
            "annotation count mismatch in " + mf.string());
    const auto& sums = manifest.at("checksums");
    const auto& corr = manifest.at("corrupted");
    for (std::size_t i = 0; i < num_frames; ++i) {
      const fs::path fp = dir / frame_filename(static_cast<int>(i));
      if (i < sums.size()) {
        const std::string want = sums[i].get<std::string>();
        const std::string got = detail::hex64(detail::file_checksum(fp));
        require(got == want, errc::io_checksum_mismatch,
                "checksum mismatch for " + fp.string() + " (want " + want + ", got " + got + ")");
      }
      Frame f = read_pgm(fp);
      f.frame_index = static_cast<int>(i);
      if (!anns[i].is_null()) {
        std::vector<GroundTruthBox> boxes;
        for (const auto& jb : anns[i])
          boxes.push_back(GroundTruthBox{jb.at(0).get<int>(), jb.at(1).get<int>(),
                                         jb.at(2).get<int>(), jb.at(3).get<int>()});
        f.boxes = std::move(boxes);
      } else {
        require(!seq.labeled, errc::io_bad_manifest,
                "labeled sequence with null annotations in " + mf.string());
      }
      f.check();
      seq.frames.push_back(std::move(f));
      seq.corrupted.push_back(i < corr.size() && corr[i].get<bool>() ? 1 : 0);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io_bad_manifest, "malformed manifest " + mf.string() + ": " + e.what());
  }
  require(!seq.frames.empty(), errc::io_bad_manifest, "empty sequence in " + mf.string());
  return seq;
}

inline void write_sequences(const fs::path& root, const std::vector<VideoSequence>& seqs) {
  fs::create_directories(root);
  for (const auto& s : seqs) write_sequence(root, s);
}

inline std::vector<VideoSequence> read_sequences(const fs::path& root) {
  require(fs::exists(root), errc::io_missing_file, "missing dataset dir: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<VideoSequence> out;
  for (const auto& d : dirs) out.push_back(read_sequence(d));
  return out;
}

inline std::string still_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "still_%05d.pgm", index);
  return buf;
}

inline void write_stills(const fs::path& root, const std::vector<Frame>& frames) {
  fs::create_directories(root / "images");
  nlohmann::json anns;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string name = still_filename(static_cast<int>(i));
    write_pgm(root / "images" / name, frames[i]);
    nlohmann::json fb = nlohmann::json::array();
    if (frames[i].boxes)
      for (const auto& b : *frames[i].boxes) fb.push_back({b.x0, b.y0, b.x1, b.y1});
    anns[name] = fb;
  }
  std::ofstream os(root / "annotations.json", std::ios::binary);
  os << anns.dump(2) << "\n";
  require(os.good(), errc::io_truncated, "short write: " + (root / "annotations.json").string());
}

inline std::vector<Frame> read_stills(const fs::path& root) {
  const fs::path af = root / "annotations.json";
  std::ifstream is(af, std::ios::binary);
  require(is.good(), errc::io_missing_file, "missing annotations: " + af.string());
  nlohmann::json anns;
  try {
    is >> anns;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io_bad_manifest, "malformed annotations " + af.string() + ": " + e.what());
  }
  std::vector<Frame> out;
  int index = 0;
  for (auto it = anns.begin(); it != anns.end(); ++it) {  // keys are sorted
    Frame f = read_pgm(root / "images" / it.key());
    f.frame_index = index++;
    std::vector<GroundTruthBox> boxes;
    try {
      for (const auto& jb : it.value())
        boxes.push_back(GroundTruthBox{jb.at(0).get<int>(), jb.at(1).get<int>(),
                                       jb.at(2).get<int>(), jb.at(3).get<int>()});
    } catch (const nlohmann::json::exception& e) {
      fail(errc::io_bad_manifest, "malformed annotations " + af.string() + ": " + e.what());
    }
    f.boxes = std::move(boxes);
    f.check();
    out.push_back(std::move(f));
  }
  return out;
}

// Mean intensity inside a box and over a surrounding ring; used to verify
// lesion visibility on generated data.
inline double mean_inside_box(const Frame& f, const GroundTruthBox& b) {
  double s = 0;
  int cnt = 0;
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x) {
      s += f.px(y, x);
      ++cnt;
    }
  return cnt ? s / cnt : 0.0;
}

inline double mean_annulus(const Frame& f, const GroundTruthBox& b, int ring = 4) {
  double s = 0;
  int cnt = 0;
  for (int y = std::max(0, b.y0 - ring); y < std::min(f.height, b.y1 + ring); ++y)
    for (int x = std::max(0, b.x0 - ring); x < std::min(f.width, b.x1 + ring); ++x) {
      if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) continue;
      s += f.px(y, x);
      ++cnt;
    }
  return cnt ? s / cnt : 0.0;
}

inline std::uint64_t frame_hash(const Frame& f) {
  std::uint64_t h = fnv1a64(f.pixels.data(), f.pixels.size());
  return h;
}

}  // namespace stcd
