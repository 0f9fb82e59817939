#pragma once

#include <cstdint>

#include "stcd/arch.hpp"

namespace stcd {

// Analytic per-component FLOP counts, derived from the architecture alone.
// conv: 2*Cin*Cout*K^2*Hout*Wout; linear: 2*In*Out; activations: 1/element;
// pooling: adds plus one divide per channel; bilinear resampling: 11 per
// output element (4 taps, 6 blend multiplies, gather arithmetic folded in);
// grey MSE: 3 per pixel plus the final divide.
struct FlopModel {
  std::int64_t backbone = 0;
  std::int64_t heads = 0;
  std::int64_t motion = 0;
  std::int64_t decision = 0;
  std::int64_t warp_net = 0;
  std::int64_t flow_head = 0;
  std::int64_t bilinear_warp = 0;
  std::int64_t grey_stat = 0;
  std::int64_t flow_stat = 0;

  std::int64_t key_path() const { return backbone + heads + motion + decision; }
  std::int64_t nonkey_path() const { return motion + decision + warp_net + heads; }
  std::int64_t framewise() const { return backbone + heads; }

  static std::int64_t conv_flops(int cin, int cout, int k, int hout, int wout) {
    return 2ll * cin * cout * k * k * hout * wout;
  }

  static FlopModel from(const ArchConfig& arch) {
    FlopModel m;
    const int fm = arch.feature_size();
    // backbone convs + relus
    int cin = 1, hw = arch.image_size;
    for (int i = 0; i < 4; ++i) {
      const int cout = arch.backbone_channels[static_cast<std::size_t>(i)];
      hw = (hw + 2 - 3) / arch.backbone_strides[static_cast<std::size_t>(i)] + 1;
      m.backbone += conv_flops(cin, cout, 3, hw, hw);
      m.backbone += static_cast<std::int64_t>(cout) * hw * hw;  // relu
      cin = cout;
    }
    const int fc = arch.feature_channels();
    const int a = arch.anchors_per_cell;
    m.heads = conv_flops(fc, a, 3, fm, fm) + conv_flops(fc, 4 * a, 3, fm, fm);

    // motion encoder convs + leaky relus
    cin = 2;
    hw = arch.image_size;
    for (int i = 0; i < 3; ++i) {
      const int cout = arch.motion_channels[static_cast<std::size_t>(i)];
      hw = (hw + 2 - 3) / 2 + 1;
      m.motion += conv_flops(cin, cout, 3, hw, hw);
      m.motion += static_cast<std::int64_t>(cout) * hw * hw;
      cin = cout;
    }
    const int mc = arch.motion_out_channels();

    // decision: pool + fc1 + relu + fc2
    m.decision = static_cast<std::int64_t>(mc) * fm * fm + mc          // pool adds + divides
                 + 2ll * mc * arch.decision_hidden + arch.decision_hidden  // fc1 + relu
                 + 2ll * arch.decision_hidden * 1;                         // fc2

    m.warp_net = conv_flops(fc + mc, fc, 3, fm, fm) + static_cast<std::int64_t>(fc) * fm * fm +
                 conv_flops(fc, fc, 1, fm, fm);

    m.flow_head = conv_flops(mc, 2, 1, fm, fm);
    m.bilinear_warp = 11ll * fc * fm * fm;
    m.grey_stat = 3ll * arch.image_size * arch.image_size + 1;
    m.flow_stat = 2ll * 2 * fm * fm + 1;
    return m;
  }
};

enum class PathKind { key, nonkey };

inline std::int64_t count_flops(const ArchConfig& arch, PathKind path) {
  const FlopModel m = FlopModel::from(arch);
  return path == PathKind::key ? m.key_path() : m.nonkey_path();
}

}  // namespace stcd
