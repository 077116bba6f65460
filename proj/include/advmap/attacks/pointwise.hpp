#pragma once

#include <vector>

#include "advmap/attacks/candidates.hpp"

namespace advmap::attacks {

namespace detail {

inline bool pointwise_success(int label, int true_class, int target) {
  return target == kUntargeted ? label != true_class : label == target;
}

}  // namespace detail

/// Decision-based L0 attack. Each restart finds the sparsest salt-and-pepper
/// corruption (densities k / pw_noise_levels) that meets the criterion, then
/// greedily restores pixels to their clean values in a random order while the
/// criterion still holds, sweeping until a full pass restores nothing. A row
/// that never finds a starting point is returned as the clean image.
inline CandidateBatch pointwise_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                           const AttackConfig& cfg) {
  cfg.validate();
  const int c = *clean.label;
  const int rows = cfg.restarts, levels = std::max(1, cfg.pw_noise_levels);
  const auto h = static_cast<Eigen::Index>(clean.size());
  const CounterRng base = detail::run_rng(cfg);
  const FMatrix clean_x = detail::clean_row(clean);

  // Starting points: all (row, level) noise draws evaluated in one batch.
  FMatrix noisy(rows * levels, h);
  for (int r = 0; r < rows; ++r)
    for (int l = 0; l < levels; ++l) {
      CounterRng rng = base.fork(static_cast<std::uint64_t>(r)).fork(static_cast<std::uint64_t>(l));
      const double density = static_cast<double>(l + 1) / levels;
      for (Eigen::Index j = 0; j < h; ++j) {
        const double u = rng.uniform();
        noisy(r * levels + l, j) = u < density / 2 ? 0.0f : u < density ? 1.0f : clean_x(0, j);
      }
    }
  const auto noisy_labels = net.predict(noisy);

  FMatrix x(rows, h);
  struct RowState {
    std::vector<Eigen::Index> queue;
    std::size_t pos = 0;
    bool changed = false;
    int passes = 0;
    bool active = false;
    CounterRng rng{0};
  };
  std::vector<RowState> state(static_cast<std::size_t>(rows));
  auto refill = [&](int r) {
    auto& s = state[r];
    s.queue.clear();
    for (Eigen::Index j = 0; j < h; ++j)
      if (x(r, j) != clean_x(0, j)) s.queue.push_back(j);
    shuffle(s.queue.begin(), s.queue.end(), s.rng);
    s.pos = 0;
    s.changed = false;
    s.active = !s.queue.empty();
  };
  for (int r = 0; r < rows; ++r) {
    x.row(r) = clean_x.row(0);
    state[r].rng = base.fork(static_cast<std::uint64_t>(r)).fork(1u << 20);
    for (int l = 0; l < levels; ++l)
      if (detail::pointwise_success(noisy_labels[r * levels + l], c, cfg.target)) {
        x.row(r) = noisy.row(r * levels + l);
        refill(r);
        break;
      }
  }

  // Lock-step greedy restoration: every active row tries one pixel per batch.
  std::vector<int> batch_rows;
  FMatrix trial;
  for (;;) {
    batch_rows.clear();
    for (int r = 0; r < rows; ++r)
      if (state[r].active) batch_rows.push_back(r);
    if (batch_rows.empty()) break;
    trial.resize(static_cast<Eigen::Index>(batch_rows.size()), h);
    for (std::size_t b = 0; b < batch_rows.size(); ++b) {
      const int r = batch_rows[b];
      const Eigen::Index j = state[r].queue[state[r].pos];
      trial.row(static_cast<Eigen::Index>(b)) = x.row(r);
      trial(static_cast<Eigen::Index>(b), j) = clean_x(0, j);
    }
    const auto labels = net.predict(trial);
    for (std::size_t b = 0; b < batch_rows.size(); ++b) {
      const int r = batch_rows[b];
      auto& s = state[r];
      if (detail::pointwise_success(labels[b], c, cfg.target)) {
        x.row(r) = trial.row(static_cast<Eigen::Index>(b));
        s.changed = true;
      }
      if (++s.pos == s.queue.size()) {
        if (s.changed && ++s.passes < cfg.pw_max_passes) {
          refill(r);
        } else {
          s.active = false;
        }
      }
    }
  }
  return {cfg, std::move(x), {}};
}

}  // namespace advmap::attacks
