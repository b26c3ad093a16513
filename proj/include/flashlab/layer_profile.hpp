#pragma once

#include <array>

namespace flashlab {

inline constexpr int kNumLayers = 101;  // normalized layers 0..100

// Per-layer deviation from the block-level optimum. Vc never moves.
struct LayerProfile {
  std::array<double, kNumLayers> va_offset{};
  std::array<double, kNumLayers> vb_offset{};
  std::array<double, kNumLayers> rber_multiplier{};

  LayerProfile() { rber_multiplier.fill(1.0); }
};

}  // namespace flashlab
