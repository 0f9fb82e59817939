#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "fd_helpers.hpp"
#include "stcd/checkpoint.hpp"

using namespace stcd;
namespace fs = std::filesystem;

namespace {

ModelBundle make_bundle(std::uint64_t seed) {
  const ArchConfig arch = testing::tiny_arch();
  ModelBundle b{arch, DetectorNet<float>::init(arch, RngStream(seed)),
                TemporalNets<float>::init(arch, RngStream(seed + 1)), {}};
  b.meta = CheckpointMeta{12, 0xdeadbeefcafef00dull, 42};
  return b;
}

}  // namespace

TEST_CASE("checkpoint serialize/deserialize round-trip is bit-exact", "[checkpoint]") {
  auto bundle = make_bundle(3);
  Checkpoint c = pack_checkpoint(bundle.detector, bundle.temporal, bundle.meta);
  const std::string bytes = serialize_checkpoint(c);
  Checkpoint back = deserialize_checkpoint(bytes);
  REQUIRE(back.version == c.version);
  REQUIRE(back.meta.epoch == 12);
  REQUIRE(back.meta.seed == 0xdeadbeefcafef00dull);
  REQUIRE(back.meta.config_hash == 42);
  const std::string bytes2 = serialize_checkpoint(back);
  REQUIRE(bytes == bytes2);

  ModelBundle restored = unpack_checkpoint(back, bundle.arch, true);
  auto orig = bundle.detector.params();
  auto rest = restored.detector.params();
  for (std::size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(orig[i]->name == rest[i]->name);
    REQUIRE(std::memcmp(orig[i]->value.data(), rest[i]->value.data(),
                        sizeof(float) * static_cast<std::size_t>(orig[i]->value.numel())) == 0);
  }
}

TEST_CASE("checkpoint file round-trip", "[checkpoint]") {
  auto bundle = make_bundle(5);
  Checkpoint c = pack_checkpoint(bundle.detector, bundle.temporal, bundle.meta);
  fs::path path = fs::temp_directory_path() / "stcd_test_ckpt.bin";
  save_checkpoint(path, c);
  Checkpoint back = load_checkpoint(path);
  REQUIRE(serialize_checkpoint(back) == serialize_checkpoint(c));
  fs::remove(path);
}

TEST_CASE("checkpoint corruption yields distinct errors", "[checkpoint]") {
  auto bundle = make_bundle(7);
  Checkpoint c = pack_checkpoint(bundle.detector, bundle.temporal, bundle.meta);
  const std::string good = serialize_checkpoint(c);

  SECTION("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    try {
      deserialize_checkpoint(bad);
      FAIL("expected error");
    } catch (const Error& e) {
      REQUIRE(e.code() == errc::io_bad_magic);
    }
  }
  SECTION("bad version") {
    std::string bad = good;
    bad[4] = 9;
    try {
      deserialize_checkpoint(bad);
      FAIL("expected error");
    } catch (const Error& e) {
      REQUIRE(e.code() == errc::io_bad_version);
    }
  }
  SECTION("truncation") {
    std::string bad = good.substr(0, good.size() / 2);
    try {
      deserialize_checkpoint(bad);
      FAIL("expected error");
    } catch (const Error& e) {
      REQUIRE(e.code() == errc::io_truncated);
    }
  }
  SECTION("flipped payload byte") {
    std::string bad = good;
    bad[good.size() / 2] = static_cast<char>(bad[good.size() / 2] ^ 0x40);
    try {
      deserialize_checkpoint(bad);
      FAIL("expected error");
    } catch (const Error& e) {
      REQUIRE(e.code() == errc::io_checksum_mismatch);
    }
  }
}

TEST_CASE("tensor header encoding for the first warp conv", "[checkpoint]") {
  // full-size model so the shape matches the documented default layout
  ArchConfig arch;
  auto temporal = TemporalNets<float>::init(arch, RngStream(11));
  auto det = DetectorNet<float>::init(arch, RngStream(12));
  const std::string bytes = serialize_checkpoint(pack_checkpoint(det, temporal, {}));

  const std::string name = "warp.conv1.w";
  const auto pos = bytes.find(name);
  REQUIRE(pos != std::string::npos);
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]))
           << (8 * i);
    return v;
  };
  REQUIRE(u32_at(pos - 4) == 12);  // name length
  std::size_t after = pos + name.size();
  REQUIRE(u32_at(after) == 4);  // ndim
  REQUIRE(u32_at(after + 4) == 64);
  REQUIRE(u32_at(after + 8) == 80);
  REQUIRE(u32_at(after + 12) == 3);
  REQUIRE(u32_at(after + 16) == 3);
}

TEST_CASE("unpack validates tensor names and shapes", "[checkpoint]") {
  auto bundle = make_bundle(13);
  Checkpoint c = pack_checkpoint(bundle.detector, bundle.temporal, bundle.meta);

  SECTION("missing tensor") {
    Checkpoint bad = c;
    bad.tensors.erase(bad.tensors.begin() + 2);
    REQUIRE_THROWS_AS(unpack_checkpoint(bad, bundle.arch, true), Error);
  }
  SECTION("unexpected tensor") {
    Checkpoint bad = c;
    bad.tensors.push_back(NamedTensor{"rogue.w", {2}, {1.f, 2.f}});
    REQUIRE_THROWS_AS(unpack_checkpoint(bad, bundle.arch, true), Error);
  }
  SECTION("wrong shape") {
    Checkpoint bad = c;
    bad.tensors[0].shape = {1, 1, 3, 3};
    bad.tensors[0].data.assign(9, 0.f);
    REQUIRE_THROWS_AS(unpack_checkpoint(bad, bundle.arch, true), Error);
  }
  SECTION("detector-only checkpoint rejected when temporal nets required") {
    Checkpoint det_only = pack_checkpoint(bundle.detector, bundle.meta);
    REQUIRE_THROWS_AS(unpack_checkpoint(det_only, bundle.arch, true), Error);
    ModelBundle ok = unpack_checkpoint(det_only, bundle.arch, false);
    REQUIRE(ok.meta.epoch == bundle.meta.epoch);
  }
}
