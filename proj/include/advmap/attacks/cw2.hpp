#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "advmap/attacks/candidates.hpp"

namespace advmap::attacks {

namespace detail {

// Largest logit excluding one class.
inline int argmax_excluding(const FMatrix& z, Eigen::Index r, int excluded) {
  int best = -1;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    if (j == excluded) continue;
    if (best < 0 || z(r, j) > z(r, best)) best = static_cast<int>(j);
  }
  return best;
}

}  // namespace detail

/// Carlini-Wagner L2. Each restart optimizes w with x = (tanh(w) + 1) / 2,
/// minimizing ||x - W||^2 + a * f(x) with Adam, where
///   targeted:   f = max(max_{j != t} Z_j - Z_t, -kappa)
///   untargeted: f = max(Z_c - max_{j != c} Z_j, -kappa)
/// and a is binary-searched per row starting at cw_initial_const. Each row
/// returns its smallest-L2 success, or the clean image if none was found.
inline CandidateBatch cw2_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                     const AttackConfig& cfg) {
  cfg.validate();
  const int c = *clean.label;
  const bool targeted = cfg.target != kUntargeted;
  const int rows = cfg.restarts;
  CounterRng rng = detail::run_rng(cfg);
  const FMatrix starts = detail::random_starts(clean, rows, cfg.start_radius, rng);
  const FMatrix clean_x = detail::clean_row(clean);
  const Eigen::Index h = clean_x.cols();

  // Shrink by 1e-6 so pixels at exactly 0 or 1 have finite preimages.
  FMatrix w0(rows, h);
  for (Eigen::Index i = 0; i < w0.size(); ++i)
    w0.data()[i] = std::atanh((2.0f * starts.data()[i] - 1.0f) * (1.0f - 1e-6f));

  std::vector<double> a(static_cast<std::size_t>(rows), cfg.cw_initial_const), lo(a.size(), 0.0),
      hi(a.size(), 1e10), best_l2(a.size(), std::numeric_limits<double>::infinity());
  FMatrix best = clean_x.replicate(rows, 1);
  const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  const auto lr = static_cast<float>(cfg.cw_learning_rate);

  for (int step = 0; step < cfg.cw_binary_steps; ++step) {
    FMatrix w = w0, m = FMatrix::Zero(rows, h), v = FMatrix::Zero(rows, h);
    std::vector<char> succeeded(a.size(), 0);
    for (int it = 1; it <= cfg.cw_iterations; ++it) {
      const FMatrix t = w.array().tanh().matrix();
      const FMatrix x = ((t.array() + 1.0f) * 0.5f).matrix();
      typename nn::Network<float>::Cache cache;
      const FMatrix z = net.forward(x, cache);
      FMatrix dz = FMatrix::Zero(rows, z.cols());
      for (Eigen::Index r = 0; r < rows; ++r) {
        const int other = detail::argmax_excluding(z, r, targeted ? cfg.target : c);
        const double margin = targeted ? z(r, other) - z(r, cfg.target) : z(r, c) - z(r, other);
        const auto ar = static_cast<float>(a[r]);
        if (margin > -cfg.cw_kappa) {
          dz(r, targeted ? other : c) += ar;
          dz(r, targeted ? cfg.target : other) -= ar;
        }
        const int label = nn::argmax_row(z.row(r));
        const bool ok = (targeted ? label == cfg.target : label != c) &&
                        (cfg.cw_kappa <= 0.0 || margin <= -cfg.cw_kappa);
        if (ok) {
          succeeded[r] = 1;
          const double d = (x.row(r).template cast<double>() - clean_x.row(0).template cast<double>()).norm();
          if (d < best_l2[r]) {
            best_l2[r] = d;
            best.row(r) = x.row(r);
          }
        }
      }
      FMatrix grad = net.backward(cache, dz, nullptr, true);
      grad += 2.0f * (x.rowwise() - clean_x.row(0));
      grad.array() *= (1.0f - t.array().square()) * 0.5f;
      m = b1 * m + (1.0f - b1) * grad;
      v = b2 * v + (1.0f - b2) * grad.cwiseProduct(grad);
      const float c1 = 1.0f - std::pow(b1, static_cast<float>(it));
      const float c2 = 1.0f - std::pow(b2, static_cast<float>(it));
      w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (succeeded[r]) {
        hi[r] = std::min(hi[r], a[r]);
        a[r] = (lo[r] + hi[r]) / 2;
      } else {
        lo[r] = std::max(lo[r], a[r]);
        a[r] = hi[r] < 1e9 ? (lo[r] + hi[r]) / 2 : a[r] * 10;
      }
    }
  }
  return {cfg, std::move(best), {}};
}

}  // namespace advmap::attacks
