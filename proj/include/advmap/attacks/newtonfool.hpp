#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "advmap/attacks/candidates.hpp"

namespace advmap::attacks {

/// NewtonFool: step against the gradient of the true-class probability p_c
/// with magnitude min(eta * ||W|| * ||grad||, p_c - 1/C) / ||grad||^2, until
/// the label changes or the iteration cap is hit. Rows are
/// eta-major (row = e * restarts + s); traces log p_c per evaluation.
inline CandidateBatch newtonfool_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                            const AttackConfig& cfg) {
  cfg.validate();
  const int c = *clean.label;
  CounterRng rng = detail::run_rng(cfg);
  const FMatrix starts = detail::random_starts(clean, cfg.restarts, cfg.start_radius, rng);
  const auto rows = static_cast<Eigen::Index>(cfg.nf_etas.size()) * starts.rows();
  FMatrix x(rows, starts.cols());
  for (std::size_t e = 0; e < cfg.nf_etas.size(); ++e)
    x.middleRows(static_cast<Eigen::Index>(e) * starts.rows(), starts.rows()) = starts;

  double clean_norm = 0.0;
  for (float v : clean.pixels) clean_norm += static_cast<double>(v) * v;
  clean_norm = std::sqrt(clean_norm);
  const double inv_classes = 1.0 / static_cast<double>(net.num_classes());

  std::vector<char> done(static_cast<std::size_t>(rows), 0);
  std::vector<std::vector<double>> traces(static_cast<std::size_t>(rows));
  for (int it = 0; it <= cfg.nf_max_iterations; ++it) {
    typename nn::Network<float>::Cache cache;
    const FMatrix z = net.forward(x, cache);
    const FMatrix p = nn::softmax_rows<float>(z);
    FMatrix dz = FMatrix::Zero(rows, z.cols());
    bool any_active = false;
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (done[r]) continue;
      traces[r].push_back(p(r, c));
      if (nn::argmax_row(z.row(r)) != c || it == cfg.nf_max_iterations) {
        done[r] = 1;
        continue;
      }
      any_active = true;
      // d p_c / d z_j = p_c * (1[j = c] - p_j)
      dz.row(r) = -p(r, c) * p.row(r);
      dz(r, c) += p(r, c);
    }
    if (!any_active) break;
    const FMatrix grad = net.backward(cache, dz, nullptr, true);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (done[r]) continue;
      const double g2 = grad.row(r).template cast<double>().squaredNorm();
      if (g2 <= 0.0) {
        done[r] = 1;
        continue;
      }
      const double eta = cfg.nf_etas[static_cast<std::size_t>(r / starts.rows())];
      const double step = std::min(eta * clean_norm * std::sqrt(g2), p(r, c) - inv_classes) / g2;
      x.row(r) -= static_cast<float>(step) * grad.row(r);
      x.row(r) = x.row(r).cwiseMax(0.0f).cwiseMin(1.0f);
    }
  }
  return {cfg, std::move(x), std::move(traces)};
}

}  // namespace advmap::attacks
