#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stcd/error.hpp"

namespace stcd {

// Static architecture description shared by the networks, the checkpoint
// loader and the FLOP model. Channel widths are runtime values so toy
// variants stay testable, but the defaults are the supported configuration.
struct ArchConfig {
  int image_size = 64;

  // Backbone: four 3x3 conv blocks. The stem keeps full resolution, the
  // remaining three halve it, giving feature stride 8.
  std::array<int, 4> backbone_channels{16, 32, 64, 64};
  std::array<int, 4> backbone_strides{1, 2, 2, 2};

  // Detection heads: one 3x3 conv each on the shared feature map.
  int anchors_per_cell = 3;
  std::array<double, 3> anchor_sides{12.0, 24.0, 40.0};

  // Motion encoder: three 3x3 stride-2 conv blocks over a 2-channel frame
  // pair, leaky relu.
  std::array<int, 3> motion_channels{8, 12, 16};
  double leaky_alpha = 0.1;

  // Warp transform: 3x3 conv from (F channels + M channels) back to F
  // channels, relu, then a 1x1 mixing conv.
  // Consistency regressor: global pool over M, two linear layers.
  int decision_hidden = 32;

  int feature_channels() const { return backbone_channels[3]; }
  int motion_out_channels() const { return motion_channels[2]; }

  int feature_stride() const {
    int s = 1;
    for (int st : backbone_strides) s *= st;
    return s;
  }

  // Spatial size of the shared feature map (and of M).
  int feature_size() const {
    int hw = image_size;
    for (int st : backbone_strides) hw = (hw + 2 - 3) / st + 1;  // 3x3, pad 1
    return hw;
  }

  void validate() const {
    require(image_size >= 16, errc::bad_config, "image_size must be >= 16");
    int ms = image_size;
    for (int i = 0; i < 3; ++i) ms = (ms + 2 - 3) / 2 + 1;
    require(ms == feature_size(), errc::bad_config,
            "motion encoder output size must match the detector feature size");
    for (int c : backbone_channels) require(c > 0, errc::bad_config, "backbone channels > 0");
    for (int c : motion_channels) require(c > 0, errc::bad_config, "motion channels > 0");
    require(anchors_per_cell == static_cast<int>(anchor_sides.size()), errc::bad_config,
            "anchor count mismatch");
    require(leaky_alpha > 0 && leaky_alpha < 1, errc::bad_config, "leaky_alpha in (0,1)");
  }
};

}  // namespace stcd
