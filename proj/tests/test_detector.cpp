#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "stcd/detector.hpp"
#include "stcd/synthgen.hpp"

using namespace stcd;

TEST_CASE("iou identities", "[detector]") {
  Box a{0, 0, 2, 2};
  REQUIRE(iou(a, a) == 1.0);
  REQUIRE(iou(a, Box{5, 5, 7, 7}) == 0.0);
  REQUIRE(iou(a, Box{1, 1, 3, 3}) == Catch::Approx(1.0 / 7.0).epsilon(1e-12));
  // symmetry on random boxes
  RngStream rng(2);
  for (int i = 0; i < 50; ++i) {
    Box p{rng.uniform(0, 30), rng.uniform(0, 30), 0, 0};
    p.x1 = p.x0 + rng.uniform(1, 20);
    p.y1 = p.y0 + rng.uniform(1, 20);
    Box q{rng.uniform(0, 30), rng.uniform(0, 30), 0, 0};
    q.x1 = q.x0 + rng.uniform(1, 20);
    q.y1 = q.y0 + rng.uniform(1, 20);
    REQUIRE(iou(p, q) == iou(q, p));
    REQUIRE(iou(p, q) >= 0.0);
    REQUIRE(iou(p, q) <= 1.0);
    REQUIRE(iou(p, p) == 1.0);
  }
}

TEST_CASE("anchor layout follows the feature grid", "[detector]") {
  ArchConfig arch;
  auto anchors = make_anchors(arch);
  REQUIRE(anchors.grid == 8);
  REQUIRE(anchors.per_cell == 3);
  REQUIRE(anchors.count() == 8 * 8 * 3);
  // cell (1,2), anchor 0: center ((2+0.5)*8, (1+0.5)*8), side 12
  const Box& b = anchors.boxes[static_cast<std::size_t>(anchors.index(0, 1, 2))];
  REQUIRE(b.cx() == 20.0);
  REQUIRE(b.cy() == 12.0);
  REQUIRE(b.w() == 12.0);
}

TEST_CASE("assign_anchors identity, empty and arithmetic cases", "[detector]") {
  ArchConfig arch;
  auto anchors = make_anchors(arch);

  SECTION("anchor equal to ground truth is positive with zero target") {
    const int ai = anchors.index(1, 2, 2);  // side-24 anchor centered at (20,20)
    const Box gt = anchors.boxes[static_cast<std::size_t>(ai)];
    auto t = assign_anchors({gt}, anchors, 0.5, 0.4);
    REQUIRE(t.label[static_cast<std::size_t>(ai)] == 1);
    for (int c = 0; c < 4; ++c)
      REQUIRE(t.reg[static_cast<std::size_t>(ai)][static_cast<std::size_t>(c)] == 0.0);
  }
  SECTION("no ground truth: everything is negative") {
    auto t = assign_anchors({}, anchors, 0.5, 0.4);
    for (auto l : t.label) REQUIRE(l == 0);
  }
  SECTION("a centered 16x16 object owns at least its best anchor") {
    const Box gt{8, 8, 24, 24};
    auto t = assign_anchors({gt}, anchors, 0.5, 0.4);
    int positives = 0;
    for (auto l : t.label) positives += l == 1;
    REQUIRE(positives >= 1);
  }
  SECTION("malformed gt rejected") {
    REQUIRE_THROWS_AS(assign_anchors({Box{5, 5, 5, 9}}, anchors, 0.5, 0.4), Error);
    REQUIRE_THROWS_AS(assign_anchors({Box{0, 0, 4, 4}}, anchors, 0.4, 0.5), Error);
  }
}

TEST_CASE("decode_and_nms empty, duplicate and overlap cases", "[detector]") {
  ArchConfig arch;
  auto anchors = make_anchors(arch);
  DetectorConfig cfg;

  SECTION("all logits below threshold give an empty list") {
    Tensor cls = Tensor::full({3, 8, 8}, -20.0f);
    Tensor reg({12, 8, 8});
    REQUIRE(decode_and_nms(cls, reg, anchors, cfg, 64).empty());
  }
  SECTION("overlapping boxes keep only the higher score") {
    Tensor cls = Tensor::full({3, 8, 8}, -20.0f);
    Tensor reg({12, 8, 8});
    cls.at(2, 4, 4) = 2.1972246f;  // sigmoid -> 0.9
    cls.at(2, 4, 5) = 1.3862944f;  // sigmoid -> 0.8; side-40 anchors 8px apart overlap heavily
    auto dets = decode_and_nms(cls, reg, anchors, cfg, 64);
    REQUIRE(dets.size() == 1);
    REQUIRE(dets[0].score == Catch::Approx(0.9).margin(1e-6));
  }
  SECTION("greedy rule with a tight nms threshold") {
    DetectorConfig tight = cfg;
    tight.nms_iou = 0.1;
    Tensor cls = Tensor::full({3, 8, 8}, -20.0f);
    Tensor reg({12, 8, 8});
    cls.at(1, 2, 2) = 2.1972246f;  // 24px box at (20,20), score 0.9
    cls.at(1, 4, 4) = 1.3862944f;  // 24px box at (36,36), score 0.8; IoU well below 0.1
    auto dets = decode_and_nms(cls, reg, anchors, tight, 64);
    REQUIRE(dets.size() == 2);
    REQUIRE(dets[0].score > dets[1].score);
    cls.at(1, 4, 4) = -20.0f;
    cls.at(1, 2, 3) = 1.3862944f;  // shifted one cell: IoU = 0.5 > 0.1, suppressed
    dets = decode_and_nms(cls, reg, anchors, tight, 64);
    REQUIRE(dets.size() == 1);
    REQUIRE(dets[0].score == Catch::Approx(0.9).margin(1e-6));
  }
  SECTION("nms output is sorted and pairwise below the threshold") {
    RngStream rng(3);
    Tensor cls({3, 8, 8});
    Tensor reg({12, 8, 8});
    for (std::int64_t i = 0; i < cls.numel(); ++i) cls[i] = static_cast<float>(rng.normal(0, 2));
    for (std::int64_t i = 0; i < reg.numel(); ++i) reg[i] = static_cast<float>(rng.normal(0, 0.3));
    auto dets = decode_and_nms(cls, reg, anchors, cfg, 64);
    REQUIRE(dets.size() <= static_cast<std::size_t>(cfg.max_dets));
    for (std::size_t i = 1; i < dets.size(); ++i) REQUIRE(dets[i - 1].score >= dets[i].score);
    for (std::size_t i = 0; i < dets.size(); ++i)
      for (std::size_t j = i + 1; j < dets.size(); ++j)
        REQUIRE(iou(dets[i].box, dets[j].box) < cfg.nms_iou);
    for (const auto& d : dets) {
      REQUIRE(d.box.x0 >= 0);
      REQUIRE(d.box.x1 <= 64);
      REQUIRE(d.score >= 0);
      REQUIRE(d.score <= 1);
    }
  }
}

TEST_CASE("backbone feature shapes and determinism", "[detector]") {
  ArchConfig arch;
  auto net = DetectorNet<float>::init(arch, RngStream(5));
  GenConfig gcfg;
  gcfg.seed = 9;
  Frame frame = gen_stills(gcfg, 1)[0];

  Tensor f = net.features(frame_to_tensor<float>(frame));
  REQUIRE(f.shape() == std::vector<int>{64, 8, 8});
  REQUIRE(f.all_finite());
  Tensor f2 = net.features(frame_to_tensor<float>(frame));
  for (std::int64_t i = 0; i < f.numel(); ++i) REQUIRE(f[i] == f2[i]);

  auto heads = net.heads(f);
  REQUIRE(heads.cls_logits.shape() == std::vector<int>{3, 8, 8});
  REQUIRE(heads.reg_offsets.shape() == std::vector<int>{12, 8, 8});
  auto heads2 = net.heads(f);
  for (std::int64_t i = 0; i < heads.cls_logits.numel(); ++i)
    REQUIRE(heads.cls_logits[i] == heads2.cls_logits[i]);

  SECTION("zero frame with zero biases propagates zeros") {
    auto zero_net = net;
    zero_net.c1.b.value.fill(0);
    zero_net.c2.b.value.fill(0);
    zero_net.c3.b.value.fill(0);
    zero_net.c4.b.value.fill(0);
    Frame black;
    black.width = black.height = 64;
    black.pixels.assign(64 * 64, 0);
    Tensor fz = zero_net.features(frame_to_tensor<float>(black));
    for (std::int64_t i = 0; i < fz.numel(); ++i) REQUIRE(fz[i] == 0.0f);
  }
  SECTION("zero features with zero head weights give bias logits") {
    auto head_net = net;
    head_net.cls.w.value.fill(0);
    head_net.cls.b.value.fill(0.37f);
    Tensor fz({64, 8, 8});
    auto h = head_net.heads(fz);
    for (std::int64_t i = 0; i < h.cls_logits.numel(); ++i) REQUIRE(h.cls_logits[i] == 0.37f);
  }
  SECTION("wrong frame size is rejected") {
    Tensor bad({1, 32, 32});
    REQUIRE_THROWS_AS(net.features(bad), Error);
  }
}

TEST_CASE("detector training reduces the loss and is reproducible", "[detector][slow]") {
  GenConfig gcfg;
  gcfg.seed = 101;
  gcfg.p_blur = 0;
  gcfg.p_contrast_match = 0;
  auto stills = gen_stills(gcfg, 50);

  ArchConfig arch;
  DetectorConfig det_cfg;
  DetectorTrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 8;
  tcfg.seed = 7;

  auto r1 = train_detector(stills, arch, det_cfg, tcfg);
  REQUIRE(r1.epoch_loss.size() == 2);
  REQUIRE(r1.epoch_loss.back() < r1.epoch_loss.front());

  auto r2 = train_detector(stills, arch, det_cfg, tcfg);
  auto p1 = r1.net.params();
  auto p2 = r2.net.params();
  for (std::size_t i = 0; i < p1.size(); ++i) {
    REQUIRE(p1[i]->name == p2[i]->name);
    REQUIRE(std::memcmp(p1[i]->value.data(), p2[i]->value.data(),
                        sizeof(float) * static_cast<std::size_t>(p1[i]->value.numel())) == 0);
  }
  REQUIRE_THROWS_AS(train_detector({}, arch, det_cfg, tcfg), Error);
}
