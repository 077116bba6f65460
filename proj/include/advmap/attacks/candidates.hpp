#pragma once

#include <algorithm>
#include <vector>

#include "advmap/attacks/config.hpp"
#include "advmap/core/rng.hpp"
#include "advmap/data/dataset.hpp"
#include "advmap/nn/network.hpp"

namespace advmap::attacks {

using FMatrix = nn::Matrix<float>;

/// Raw attack output before any filtering: one candidate per row.
struct CandidateBatch {
  AttackConfig config;
  FMatrix x;
  // Per-row objective traces (NewtonFool logs the true-class probability).
  std::vector<std::vector<double>> traces;
};

namespace detail {

/// Stream for one attack run, keyed on (seed, kind, target).
inline CounterRng run_rng(const AttackConfig& cfg) {
  return CounterRng(cfg.seed).fork(static_cast<std::uint64_t>(cfg.kind)).fork(
      static_cast<std::uint64_t>(cfg.target + 1));
}

inline FMatrix clean_row(const data::ImageVec& clean) { return data::to_matrix<float>(clean); }

/// `restarts` starting points; row 0 is the clean image, the others are
/// uniform draws from the L-inf box of `radius` around it, clipped to [0,1].
inline FMatrix random_starts(const data::ImageVec& clean, int restarts, double radius, CounterRng& rng) {
  FMatrix x(restarts, static_cast<Eigen::Index>(clean.size()));
  for (int r = 0; r < restarts; ++r)
    for (std::size_t j = 0; j < clean.size(); ++j) {
      const double offset = r == 0 ? 0.0 : rng.uniform(-radius, radius);
      x(r, static_cast<Eigen::Index>(j)) =
          std::clamp(static_cast<float>(clean.pixels[j] + offset), 0.0f, 1.0f);
    }
  return x;
}

/// Gradient of the attack objective (ascent direction): cross-entropy of
/// the true class when untargeted, log-probability of `target` otherwise.
inline FMatrix objective_gradient(const nn::Network<float>& net, const FMatrix& x, int true_class,
                                  int target) {
  const bool targeted = target != kUntargeted;
  std::vector<int> labels(static_cast<std::size_t>(x.rows()), targeted ? target : true_class);
  FMatrix g = net.cross_entropy_input_gradient(x, labels);
  if (targeted) g = -g;
  return g;
}

inline float sign(float v) { return static_cast<float>((v > 0.0f) - (v < 0.0f)); }

inline void require_correct(const nn::Network<float>& net, const data::ImageVec& clean) {
  require(clean.label.has_value(), ErrorCode::kInvalidArgument, "clean image needs a true label");
  require(net.predict(clean.span()) == *clean.label, ErrorCode::kInvalidArgument,
          "clean image is already misclassified by the target model");
}

}  // namespace detail
}  // namespace advmap::attacks
