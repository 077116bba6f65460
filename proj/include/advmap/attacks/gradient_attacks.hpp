#pragma once

#include <cmath>
#include <vector>

#include "advmap/attacks/candidates.hpp"
#include "advmap/attacks/norms.hpp"

namespace advmap::attacks {

namespace detail {

// Rows are laid out budget-major: row = e * restarts + s.
inline FMatrix tile_starts(const FMatrix& starts, std::size_t budgets) {
  FMatrix x(starts.rows() * static_cast<Eigen::Index>(budgets), starts.cols());
  for (std::size_t e = 0; e < budgets; ++e)
    x.middleRows(static_cast<Eigen::Index>(e) * starts.rows(), starts.rows()) = starts;
  return x;
}

inline double row_budget(const AttackConfig& cfg, Eigen::Index row) {
  return cfg.epsilons[static_cast<std::size_t>(row / cfg.restarts)];
}

inline void project_rows(Norm norm, FMatrix& x, const data::ImageVec& clean, const AttackConfig& cfg) {
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    project_to_budget(norm, std::span<float>(x.row(r).data(), static_cast<std::size_t>(x.cols())),
                      clean.span(), row_budget(cfg, r));
}

/// Unit-norm step direction for one gradient row.
inline void step_direction(Norm norm, std::span<const float> g, std::span<float> out) {
  if (norm == Norm::kLinf) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = sign(g[i]);
    return;
  }
  double n = 0.0;
  for (float v : g) n += norm == Norm::kL1 ? std::abs(static_cast<double>(v)) : static_cast<double>(v) * v;
  if (norm == Norm::kL2) n = std::sqrt(n);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = n > 0.0 ? static_cast<float>(g[i] / n) : 0.0f;
}

}  // namespace detail

/// One signed-gradient step of size epsilon from each start, projected to
/// the L-inf ball of epsilon around the clean image and to [0,1].
inline CandidateBatch fgsm_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                      const AttackConfig& cfg) {
  cfg.validate();
  CounterRng rng = detail::run_rng(cfg);
  const FMatrix starts = detail::random_starts(clean, cfg.restarts, cfg.start_radius, rng);
  FMatrix x = detail::tile_starts(starts, cfg.epsilons.size());
  const FMatrix g = detail::objective_gradient(net, x, *clean.label, cfg.target);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto eps = static_cast<float>(detail::row_budget(cfg, r));
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(r, j) += eps * detail::sign(g(r, j));
  }
  detail::project_rows(Norm::kLinf, x, clean, cfg);
  return {cfg, std::move(x), {}};
}

/// Iterated normalized-gradient steps of size `step_for(epsilon)` in the
/// chosen norm, each followed by projection to the epsilon ball and [0,1].
inline CandidateBatch bim_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                     const AttackConfig& cfg, Norm norm) {
  cfg.validate();
  CounterRng rng = detail::run_rng(cfg);
  const FMatrix starts = detail::random_starts(clean, cfg.restarts, cfg.start_radius, rng);
  FMatrix x = detail::tile_starts(starts, cfg.epsilons.size());
  FMatrix dir(x.rows(), x.cols());
  for (int it = 0; it < cfg.iterations; ++it) {
    const FMatrix g = detail::objective_gradient(net, x, *clean.label, cfg.target);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      detail::step_direction(norm, std::span<const float>(g.row(r).data(), static_cast<std::size_t>(g.cols())),
                             std::span<float>(dir.row(r).data(), static_cast<std::size_t>(dir.cols())));
      x.row(r) += static_cast<float>(cfg.step_for(detail::row_budget(cfg, r))) * dir.row(r);
    }
    detail::project_rows(norm, x, clean, cfg);
  }
  return {cfg, std::move(x), {}};
}

/// BIM L-inf with a momentum accumulator g <- mu * g + grad / ||grad||_1,
/// stepping along sign(g).
inline CandidateBatch mi_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                    const AttackConfig& cfg) {
  cfg.validate();
  CounterRng rng = detail::run_rng(cfg);
  const FMatrix starts = detail::random_starts(clean, cfg.restarts, cfg.start_radius, rng);
  FMatrix x = detail::tile_starts(starts, cfg.epsilons.size());
  FMatrix accumulated = FMatrix::Zero(x.rows(), x.cols());
  const auto mu = static_cast<float>(cfg.momentum);
  for (int it = 0; it < cfg.iterations; ++it) {
    const FMatrix g = detail::objective_gradient(net, x, *clean.label, cfg.target);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const float l1 = g.row(r).cwiseAbs().sum();
      accumulated.row(r) *= mu;
      if (l1 > 0.0f) accumulated.row(r) += g.row(r) / l1;
      const auto step = static_cast<float>(cfg.step_for(detail::row_budget(cfg, r)));
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(r, j) += step * detail::sign(accumulated(r, j));
    }
    detail::project_rows(Norm::kLinf, x, clean, cfg);
  }
  return {cfg, std::move(x), {}};
}

}  // namespace advmap::attacks
