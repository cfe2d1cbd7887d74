#pragma once

#include "levisim/common.hpp"

#include <cmath>

namespace levisim::server {

/// trap = display_origin + (input - control_origin) / ratio.
struct GainConfig {
  double ratio = 1.0;
  Vec3 control_origin = Vec3::Zero();
  Vec3 display_origin = Vec3::Zero();

  void validate() const {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw std::invalid_argument("C:D ratio must be positive");
  }
};

struct GainResult {
  Vec3 trap = Vec3::Zero();
  bool clamped = false;
};

/// Maps raw input to a trap position and clamps it into `volume`.
/// Throws std::invalid_argument for non-finite input.
inline GainResult apply_cd_gain(const Vec3& input, const GainConfig& gain, const Box& volume) {
  if (!input.allFinite()) throw std::invalid_argument("input position must be finite");
  GainResult r;
  const Vec3 mapped = gain.display_origin + (input - gain.control_origin) / gain.ratio;
  r.trap = volume.clamp(mapped);
  r.clamped = r.trap != mapped;
  return r;
}

}  // namespace levisim::server
