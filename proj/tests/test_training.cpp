#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "fd_helpers.hpp"
#include "stcd/checkpoint.hpp"
#include "stcd/training.hpp"

using namespace stcd;

namespace {

std::vector<VideoSequence> make_videos(const ArchConfig& arch, int count, int len,
                                       std::uint64_t seed) {
  GenConfig gcfg;
  gcfg.image_size = arch.image_size;
  gcfg.drift_pad = 1;
    gcfg.lesion_radius_min = 2.0;
  gcfg.lesion_radius_max = 4.0;
  gcfg.lesion_count_min = gcfg.lesion_count_max = 1;
  gcfg.seq_len_min = gcfg.seq_len_max = len;
  gcfg.seed = seed;
  std::vector<VideoSequence> out;
  for (int i = 0; i < count; ++i)
    out.push_back(strip_labels(gen_sequence(gcfg, "u" + std::to_string(i))));
  return out;
}

}  // namespace

TEST_CASE("pair sampler counts, bounds and determinism", "[training]") {
  GenConfig gcfg;
  gcfg.seq_len_min = gcfg.seq_len_max = 60;
  gcfg.seed = 17;
  std::vector<VideoSequence> vids{strip_labels(gen_sequence(gcfg, "a")),
                                  strip_labels(gen_sequence(gcfg, "b"))};
  TrainConfig cfg;
  cfg.seed = 5;

  auto pairs = sample_pairs(vids, cfg);
  REQUIRE(pairs.size() == 40);  // floor(60/3) per sequence
  for (const auto& p : pairs) {
    REQUIRE(p.offset != 0);
    REQUIRE(std::abs(p.offset) <= cfg.max_offset);
    REQUIRE(p.other_frame == p.key_frame + p.offset);
    REQUIRE(p.other_frame >= 0);
    REQUIRE(p.other_frame < 60);
    REQUIRE((p.seq_id == "a" || p.seq_id == "b"));
  }
  auto pairs2 = sample_pairs(vids, cfg);
  REQUIRE(pairs.size() == pairs2.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    REQUIRE(pairs[i].seq == pairs2[i].seq);
    REQUIRE(pairs[i].key_frame == pairs2[i].key_frame);
    REQUIRE(pairs[i].other_frame == pairs2[i].other_frame);
  }

  cfg.seed = 6;
  auto pairs3 = sample_pairs(vids, cfg);
  bool any_diff = pairs3.size() != pairs.size();
  for (std::size_t i = 0; !any_diff && i < pairs.size(); ++i)
    any_diff = pairs[i].key_frame != pairs3[i].key_frame ||
               pairs[i].other_frame != pairs3[i].other_frame;
  REQUIRE(any_diff);
}

TEST_CASE("pair sampler rejects too-short sequences by id", "[training]") {
  GenConfig gcfg;
  gcfg.seq_len_min = gcfg.seq_len_max = 10;
  gcfg.seed = 23;
  std::vector<VideoSequence> vids{strip_labels(gen_sequence(gcfg, "shorty"))};
  TrainConfig cfg;  // max_offset 20 needs >= 21 frames
  try {
    sample_pairs(vids, cfg);
    FAIL("expected error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("shorty") != std::string::npos);
  }
}

TEST_CASE("learning-rate schedule matches the training protocol", "[training]") {
  TrainConfig cfg;  // warmup 10, base rates (0 -> 1e-3, 1e-3, 1e-3), decay 0.9
  auto e0 = lr_schedule(0, cfg);
  REQUIRE(e0.decision == 0.0);
  REQUIRE(e0.motion == 0.001);
  REQUIRE(e0.warp == 0.001);

  auto e1 = lr_schedule(1, cfg);
  REQUIRE(e1.motion == Catch::Approx(0.0009).epsilon(1e-12));
  REQUIRE(e1.decision == 0.0);

  for (int e = 0; e < cfg.warmup_epochs; ++e) REQUIRE(lr_schedule(e, cfg).decision == 0.0);

  auto e10 = lr_schedule(10, cfg);
  REQUIRE(e10.decision == 0.001);
  REQUIRE(e10.motion == Catch::Approx(0.001 * std::pow(0.9, 10)).epsilon(1e-12));

  auto e12 = lr_schedule(12, cfg);
  REQUIRE(e12.decision == Catch::Approx(0.001 * 0.81).epsilon(1e-12));
  REQUIRE_THROWS_AS(lr_schedule(-1, cfg), Error);
}

TEST_CASE("warm-up training reduces the mimic loss and is reproducible", "[training][slow]") {
  const ArchConfig arch = testing::tiny_arch();
  auto videos = make_videos(arch, 3, 24, 31);
  auto det = DetectorNet<float>::init(arch, RngStream(41));

  TrainConfig cfg;
  cfg.max_offset = 6;
  cfg.warmup_epochs = 3;
  cfg.total_epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 9;

  auto r1 = train_stcd(videos, det, cfg);
  REQUIRE(r1.epoch_feat_loss.size() == 3);
  REQUIRE(r1.epoch_feat_loss.back() < r1.epoch_feat_loss.front());
  REQUIRE(r1.epoch_dec_loss[0] == 0.0);  // decision loss inactive during warm-up

  auto r2 = train_stcd(videos, det, cfg);
  auto p1 = r1.nets.params();
  auto p2 = r2.nets.params();
  for (std::size_t i = 0; i < p1.size(); ++i)
    REQUIRE(std::memcmp(p1[i]->value.data(), p2[i]->value.data(),
                        sizeof(float) * static_cast<std::size_t>(p1[i]->value.numel())) == 0);

  REQUIRE_THROWS_AS(train_stcd({}, det, cfg), Error);
}

TEST_CASE("joint training leaves the detector bit-identical", "[training][slow]") {
  const ArchConfig arch = testing::tiny_arch();
  auto videos = make_videos(arch, 3, 24, 37);
  auto det = DetectorNet<float>::init(arch, RngStream(43));
  const std::string det_before = serialize_checkpoint(pack_checkpoint(det, {}));

  TrainConfig cfg;
  cfg.max_offset = 6;
  cfg.warmup_epochs = 2;
  cfg.total_epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 11;

  auto r = train_stcd(videos, det, cfg);
  REQUIRE(r.epoch_dec_loss[2] > 0.0);  // the regressor is live after warm-up
  REQUIRE(serialize_checkpoint(pack_checkpoint(det, {})) == det_before);

  // trained temporal nets round-trip bit-exactly through the checkpoint
  Checkpoint full = pack_checkpoint(det, r.nets, CheckpointMeta{4, cfg.seed, 0});
  ModelBundle back = unpack_checkpoint(deserialize_checkpoint(serialize_checkpoint(full)), arch, true);
  auto orig = r.nets.params();
  auto rest = back.temporal.params();
  for (std::size_t i = 0; i < orig.size(); ++i)
    REQUIRE(std::memcmp(orig[i]->value.data(), rest[i]->value.data(),
                        sizeof(float) * static_cast<std::size_t>(orig[i]->value.numel())) == 0);
}

TEST_CASE("bilinear warp training mode trains the flow head instead", "[training][slow]") {
  const ArchConfig arch = testing::tiny_arch();
  auto videos = make_videos(arch, 2, 24, 53);
  auto det = DetectorNet<float>::init(arch, RngStream(47));

  TrainConfig cfg;
  cfg.max_offset = 6;
  cfg.warmup_epochs = 2;
  cfg.total_epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 13;
  cfg.warp_mode = WarpMode::bilinear;

  auto before = TemporalNets<float>::init(arch, RngStream(cfg.seed).derive("temporal_init"));
  auto r = train_stcd(videos, det, cfg);
  // flow head moved, warp-net stayed at its initialization
  REQUIRE(std::memcmp(r.nets.flow.conv.w.value.data(), before.flow.conv.w.value.data(),
                      sizeof(float) * static_cast<std::size_t>(before.flow.conv.w.value.numel())) != 0);
  REQUIRE(std::memcmp(r.nets.warp.c1.w.value.data(), before.warp.c1.w.value.data(),
                      sizeof(float) * static_cast<std::size_t>(before.warp.c1.w.value.numel())) == 0);
}
