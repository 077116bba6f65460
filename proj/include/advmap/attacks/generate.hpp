#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "advmap/attacks/adversarial_set.hpp"
#include "advmap/attacks/cw2.hpp"
#include "advmap/attacks/gradient_attacks.hpp"
#include "advmap/attacks/newtonfool.hpp"
#include "advmap/attacks/norms.hpp"
#include "advmap/attacks/pointwise.hpp"

namespace advmap::attacks {

inline constexpr double kDeltaCap = 28.0;
inline constexpr double kDeltaSlack = 1.2;

/// Raw candidates for one run. Checks the preconditions shared by all
/// attacks: the clean image is labeled, correctly classified, and the target
/// is a valid class other than the true one.
inline CandidateBatch run_candidates(const nn::Network<float>& net, const data::ImageVec& clean,
                                     const AttackConfig& cfg) {
  cfg.validate();
  detail::require_correct(net, clean);
  if (cfg.target != kUntargeted) {
    require(supports_targeting(cfg.kind), ErrorCode::kInvalidArgument,
            std::string(attack_name(cfg.kind)) + " has no targeted mode");
    require(cfg.target < static_cast<int>(net.num_classes()) && cfg.target != *clean.label,
            ErrorCode::kInvalidArgument, "target must be a class other than the true class");
  }
  switch (cfg.kind) {
    case AttackKind::kFgsm: return fgsm_candidates(net, clean, cfg);
    case AttackKind::kBimL1:
    case AttackKind::kBimL2:
    case AttackKind::kBimLinf: return bim_candidates(net, clean, cfg, bim_norm(cfg.kind));
    case AttackKind::kMi: return mi_candidates(net, clean, cfg);
    case AttackKind::kNf: return newtonfool_candidates(net, clean, cfg);
    case AttackKind::kPw: return pointwise_candidates(net, clean, cfg);
    case AttackKind::kCw2: return cw2_candidates(net, clean, cfg);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown attack kind");
}

/// Labels the target model assigns to every candidate row.
inline std::vector<int> candidate_labels(const nn::Network<float>& net, const CandidateBatch& batch) {
  return net.predict(batch.x);
}

/// Most frequent non-true label among the candidates (ties -> lowest class),
/// or kUntargeted if nothing was misclassified.
inline int dominant_wrong_class(std::span<const int> labels, int true_class, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels)
    if (l != true_class) ++counts[static_cast<std::size_t>(l)];
  int best = kUntargeted;
  for (std::size_t k = 0; k < classes; ++k)
    if (counts[k] > 0 && (best < 0 || counts[k] > counts[static_cast<std::size_t>(best)]))
      best = static_cast<int>(k);
  return best;
}

/// Builds I_k(t) from already-computed runs: keeps rows labeled t, drops
/// exact duplicates, then filters to the L2 ball of radius delta. Without an
/// explicit delta the radius is kDeltaSlack times the largest L2 among the
/// survivors, capped at kDeltaCap.
inline AdversarialSet assemble_set(const nn::Network<float>& net, const data::ImageVec& clean, AttackKind kind,
                                   int target, std::span<const CandidateBatch> batches,
                                   std::optional<double> delta, std::size_t requested,
                                   std::size_t target_model = 0) {
  AdversarialSet set;
  set.clean = clean;
  set.true_class = *clean.label;
  set.target_model = target_model;
  set.kind = kind;
  set.target_class = target;
  set.requested = requested;

  std::vector<data::ImageVec> kept;
  std::vector<double> dist;
  std::set<std::vector<float>> seen;
  for (const auto& batch : batches) {
    set.runs.push_back(batch.config);
    const auto labels = candidate_labels(net, batch);
    for (Eigen::Index r = 0; r < batch.x.rows(); ++r) {
      if (labels[static_cast<std::size_t>(r)] != target || target == set.true_class) continue;
      auto image = data::from_row(batch.x, r);
      if (!seen.insert(image.pixels).second) continue;
      image.label = set.true_class;
      image.source = clean.source;
      dist.push_back(l2_distance(image.span(), clean.span()));
      kept.push_back(std::move(image));
    }
  }

  if (delta) {
    set.delta = *delta;
  } else {
    const double far = dist.empty() ? 0.0 : *std::max_element(dist.begin(), dist.end());
    set.delta = std::min(kDeltaSlack * far, kDeltaCap);
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!(dist[i] <= set.delta) || dist[i] <= 0.0) continue;
    set.examples.push_back(std::move(kept[i]));
    set.l2.push_back(dist[i]);
  }
  set.shortfall = set.size() < requested;
  return set;
}

namespace detail {

inline AdversarialSet single_run_set(const nn::Network<float>& net, const data::ImageVec& clean,
                                     AttackConfig cfg) {
  const CandidateBatch batch = run_candidates(net, clean, cfg);
  int t = cfg.target;
  if (t == kUntargeted) t = dominant_wrong_class(candidate_labels(net, batch), *clean.label, net.num_classes());
  return assemble_set(net, clean, cfg.kind, t, std::span(&batch, 1), cfg.delta,
                      static_cast<std::size_t>(cfg.count));
}

inline AdversarialSet with_kind(const nn::Network<float>& net, const data::ImageVec& clean, AttackConfig cfg,
                                AttackKind kind) {
  cfg.kind = kind;
  return single_run_set(net, clean, cfg);
}

}  // namespace detail

// Single-run operations. A targeted config collects examples labeled
// cfg.target; an untargeted one collects the most common wrong label.
inline AdversarialSet fgsm(const nn::Network<float>& net, const data::ImageVec& clean, const AttackConfig& cfg) {
  return detail::with_kind(net, clean, cfg, AttackKind::kFgsm);
}

inline AdversarialSet bim(const nn::Network<float>& net, const data::ImageVec& clean, const AttackConfig& cfg,
                          Norm norm) {
  const AttackKind kind = norm == Norm::kL1   ? AttackKind::kBimL1
                          : norm == Norm::kL2 ? AttackKind::kBimL2
                                              : AttackKind::kBimLinf;
  return detail::with_kind(net, clean, cfg, kind);
}

inline AdversarialSet mi(const nn::Network<float>& net, const data::ImageVec& clean, const AttackConfig& cfg) {
  return detail::with_kind(net, clean, cfg, AttackKind::kMi);
}

inline AdversarialSet newtonfool(const nn::Network<float>& net, const data::ImageVec& clean,
                                 const AttackConfig& cfg) {
  return detail::with_kind(net, clean, cfg, AttackKind::kNf);
}

inline AdversarialSet pointwise(const nn::Network<float>& net, const data::ImageVec& clean,
                                const AttackConfig& cfg) {
  return detail::with_kind(net, clean, cfg, AttackKind::kPw);
}

inline AdversarialSet cw2(const nn::Network<float>& net, const data::ImageVec& clean, const AttackConfig& cfg) {
  return detail::with_kind(net, clean, cfg, AttackKind::kCw2);
}

/// I_k(t) for several targets. The untargeted run is shared by all targets;
/// attacks with a targeted mode add one targeted run per t.
inline std::vector<AdversarialSet> generate_sets(const nn::Network<float>& net, const data::ImageVec& clean,
                                                 const AttackConfig& base, std::span<const int> targets,
                                                 std::size_t target_model = 0) {
  AttackConfig untargeted = base;
  untargeted.target = kUntargeted;
  const CandidateBatch shared = run_candidates(net, clean, untargeted);
  std::vector<AdversarialSet> sets;
  for (int t : targets) {
    std::vector<CandidateBatch> batches;
    if (supports_targeting(base.kind)) {
      AttackConfig targeted = base;
      targeted.target = t;
      batches.push_back(run_candidates(net, clean, targeted));
    }
    batches.push_back(shared);
    sets.push_back(assemble_set(net, clean, base.kind, t, batches, base.delta,
                                static_cast<std::size_t>(base.count), target_model));
  }
  return sets;
}

inline AdversarialSet generate_set(const nn::Network<float>& net, const data::ImageVec& clean,
                                   const AttackConfig& base, int target, std::size_t target_model = 0) {
  require(target >= 0 && target < static_cast<int>(net.num_classes()), ErrorCode::kInvalidArgument,
          "generate_set needs a concrete target class");
  return std::move(generate_sets(net, clean, base, std::span(&target, 1), target_model).front());
}

/// Every class other than the true one.
inline std::vector<int> all_targets(int true_class, std::size_t classes) {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(classes); ++k)
    if (k != true_class) out.push_back(k);
  return out;
}

}  // namespace advmap::attacks
