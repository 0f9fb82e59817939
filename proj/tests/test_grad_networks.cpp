#include <catch2/catch_amalgamated.hpp>

#include "fd_helpers.hpp"

using namespace stcd;
using namespace stcd::testing;

TEST_CASE("motion encoder end-to-end gradients", "[grad]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    REQUIRE(check_motion_net(seed) < 1e-4);
  }
}

TEST_CASE("warp transform end-to-end gradients", "[grad]") {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    CAPTURE(seed);
    REQUIRE(check_warp_net(seed) < 1e-4);
  }
}

TEST_CASE("decision regressor end-to-end gradients", "[grad]") {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    CAPTURE(seed);
    REQUIRE(check_decision_net(seed) < 1e-4);
  }
}

TEST_CASE("flow head + resampling warp gradients", "[grad]") {
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    CAPTURE(seed);
    REQUIRE(check_flow_bilinear(seed) < 1e-4);
  }
}

TEST_CASE("detector backbone and heads gradients", "[grad]") {
  for (std::uint64_t seed : {13u, 14u}) {
    CAPTURE(seed);
    REQUIRE(check_detector_net(seed) < 1e-4);
  }
}

TEST_CASE("joint mimic loss path gradients", "[grad]") {
  for (std::uint64_t seed : {15u, 16u}) {
    CAPTURE(seed);
    REQUIRE(check_mimic_loss_path(seed) < 1e-4);
  }
}

TEST_CASE("decision loss path gradients", "[grad]") {
  for (std::uint64_t seed : {17u, 18u}) {
    CAPTURE(seed);
    REQUIRE(check_decision_loss_path(seed) < 1e-4);
  }
}
