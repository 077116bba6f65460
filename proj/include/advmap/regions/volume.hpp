#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "advmap/core/error.hpp"

namespace advmap::regions {

struct BallVolume {
  double log_value = 0.0;  // natural log of the volume, always finite
  double value = 0.0;      // exp(log_value); 0 or inf when not representable
  bool representable = true;
};

/// Volume of the h-dimensional Euclidean ball of radius delta,
/// pi^(h/2) / Gamma(1 + h/2) * delta^h, evaluated in log space.
inline BallVolume ball_volume(std::size_t h, double delta) {
  require(h >= 1, ErrorCode::kInvalidArgument, "ball dimension must be >= 1");
  require(delta > 0.0, ErrorCode::kInvalidArgument, "ball radius must be > 0");
  const double half = static_cast<double>(h) / 2.0;
  BallVolume v;
  v.log_value = half * std::log(std::numbers::pi) - std::lgamma(1.0 + half) +
                static_cast<double>(h) * std::log(delta);
  v.value = std::exp(v.log_value);
  v.representable = std::isnormal(v.value);
  return v;
}

}  // namespace advmap::regions
