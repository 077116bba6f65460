#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "advmap/attacks/config.hpp"

namespace advmap::attacks {

/// |a_i - b_i| above this counts as a perturbed pixel (float noise guard).
inline constexpr double kPerturbedThreshold = 1e-6;

inline double l2_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

inline double l1_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return s;
}

inline double linf_distance(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

inline double norm_distance(Norm norm, std::span<const float> a, std::span<const float> b) {
  switch (norm) {
    case Norm::kL1: return l1_distance(a, b);
    case Norm::kL2: return l2_distance(a, b);
    case Norm::kLinf: return linf_distance(a, b);
  }
  return 0.0;
}

inline bool is_perturbed(float adv, float clean) {
  return std::abs(static_cast<double>(adv) - static_cast<double>(clean)) > kPerturbedThreshold;
}

inline std::size_t perturbed_count(std::span<const float> adv, std::span<const float> clean) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) n += is_perturbed(adv[i], clean[i]);
  return n;
}

/// Euclidean projection of `v` onto the L1 ball of the given radius
/// (sort-and-threshold method).
inline void project_l1_ball(std::span<double> v, double radius) {
  double total = 0.0;
  for (double x : v) total += std::abs(x);
  if (total <= radius) return;
  std::vector<double> mags(v.size());
  std::transform(v.begin(), v.end(), mags.begin(), [](double x) { return std::abs(x); });
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumulative += mags[k];
    const double t = (cumulative - radius) / static_cast<double>(k + 1);
    if (mags[k] > t) theta = t;
  }
  for (double& x : v) x = std::copysign(std::max(std::abs(x) - theta, 0.0), x);
}

inline void project_l2_ball(std::span<double> v, double radius) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (n <= radius || n == 0.0) return;
  for (double& x : v) x *= radius / n;
}

inline void project_linf_ball(std::span<double> v, double radius) {
  for (double& x : v) x = std::clamp(x, -radius, radius);
}

inline void project_ball(Norm norm, std::span<double> v, double radius) {
  switch (norm) {
    case Norm::kL1: project_l1_ball(v, radius); break;
    case Norm::kL2: project_l2_ball(v, radius); break;
    case Norm::kLinf: project_linf_ball(v, radius); break;
  }
}

/// clean + project(candidate - clean) clipped to [0, 1]. Clipping only
/// shrinks each coordinate's offset, so the result stays inside the ball.
inline void project_to_budget(Norm norm, std::span<float> candidate, std::span<const float> clean,
                              double radius) {
  std::vector<double> delta(candidate.size());
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = static_cast<double>(candidate[i]) - static_cast<double>(clean[i]);
  project_ball(norm, delta, radius);
  // Rounding to float can overshoot the radius by an ulp; shrink until the
  // budget holds when re-measured on the stored values.
  for (double shrink = 1.0;; shrink *= 1.0 - 1e-6) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
      float v = std::clamp(static_cast<float>(static_cast<double>(clean[i]) + shrink * delta[i]), 0.0f, 1.0f);
      if (norm == Norm::kLinf)
        while (std::abs(static_cast<double>(v) - static_cast<double>(clean[i])) > radius)
          v = std::nextafter(v, clean[i]);
      candidate[i] = v;
    }
    if (norm_distance(norm, candidate, clean) <= radius) return;
  }
}

}  // namespace advmap::attacks
