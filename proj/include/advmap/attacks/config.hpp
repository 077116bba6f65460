#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advmap/core/error.hpp"

namespace advmap::attacks {

enum class AttackKind { kPw, kCw2, kNf, kFgsm, kBimL1, kBimL2, kBimLinf, kMi };

inline constexpr AttackKind kAllAttackKinds[] = {AttackKind::kPw,    AttackKind::kCw2,
                                                 AttackKind::kNf,    AttackKind::kFgsm,
                                                 AttackKind::kBimL1, AttackKind::kBimL2,
                                                 AttackKind::kBimLinf, AttackKind::kMi};

inline std::string_view attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::kPw: return "PW";
    case AttackKind::kCw2: return "CW2";
    case AttackKind::kNf: return "NF";
    case AttackKind::kFgsm: return "FGSM";
    case AttackKind::kBimL1: return "BIM_L1";
    case AttackKind::kBimL2: return "BIM_L2";
    case AttackKind::kBimLinf: return "BIM_LINF";
    case AttackKind::kMi: return "MI";
  }
  return "?";
}

/// Name as printed in table row labels, e.g. "BIM L1".
inline std::string_view attack_label(AttackKind k) {
  switch (k) {
    case AttackKind::kBimL1: return "BIM L1";
    case AttackKind::kBimL2: return "BIM L2";
    case AttackKind::kBimLinf: return "BIM Linf";
    default: return attack_name(k);
  }
}

inline AttackKind parse_attack_kind(std::string_view s) {
  for (auto k : kAllAttackKinds)
    if (attack_name(k) == s) return k;
  throw Error(ErrorCode::kInvalidArgument, "unknown attack kind '" + std::string(s) + "'");
}

enum class Norm { kL1, kL2, kLinf };

inline Norm bim_norm(AttackKind k) {
  switch (k) {
    case AttackKind::kBimL1: return Norm::kL1;
    case AttackKind::kBimL2: return Norm::kL2;
    default: return Norm::kLinf;
  }
}

inline bool supports_targeting(AttackKind k) { return k != AttackKind::kNf; }

inline constexpr int kUntargeted = -1;

struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  int target = kUntargeted;  // class t, or kUntargeted

  // Norm budget grid for FGSM/BIM/MI (each value is one budget epsilon).
  std::vector<double> epsilons{0.3};
  double step_size = 0.0;  // per-iteration step; 0 -> 2.5 * epsilon / iterations
  int iterations = 10;

  // Diversity: run 0 starts at the clean image, the rest at a uniform draw
  // from the L-inf box of `start_radius` around it.
  int restarts = 10;
  double start_radius = 0.01;

  double momentum = 1.0;  // MI decay

  std::vector<double> nf_etas{0.01};  // NewtonFool step scale grid
  int nf_max_iterations = 100;

  double cw_initial_const = 1e-2;
  int cw_binary_steps = 9;
  int cw_iterations = 1000;
  double cw_kappa = 0.0;
  double cw_learning_rate = 1e-2;

  int pw_noise_levels = 40;  // salt-and-pepper densities tried for the start
  int pw_max_passes = 10;

  int count = 80;  // requested number of examples
  std::uint64_t seed = 0;
  std::optional<double> delta;  // L2 ball radius; unset -> automatic rule

  double step_for(double epsilon) const {
    return step_size > 0.0 ? step_size : 2.5 * epsilon / static_cast<double>(iterations);
  }

  void validate() const {
    for (double e : epsilons)
      require(e > 0.0, ErrorCode::kInvalidArgument, "epsilon must be > 0");
    require(!epsilons.empty(), ErrorCode::kInvalidArgument, "epsilon grid is empty");
    require(iterations >= 1 && restarts >= 1, ErrorCode::kInvalidArgument,
            "iterations and restarts must be >= 1");
    require(count >= 1, ErrorCode::kInvalidArgument, "count must be >= 1");
    require(!delta || *delta >= 0.0, ErrorCode::kInvalidArgument, "delta must be >= 0");
    require(start_radius >= 0.0, ErrorCode::kInvalidArgument, "start radius must be >= 0");
    for (double e : nf_etas) require(e > 0.0, ErrorCode::kInvalidArgument, "eta must be > 0");
    require(cw_binary_steps >= 1 && cw_iterations >= 1, ErrorCode::kInvalidArgument,
            "CW2 steps must be >= 1");
    require(target >= kUntargeted, ErrorCode::kInvalidArgument, "bad target class");
  }
};

inline void to_json(nlohmann::json& j, const AttackConfig& c) {
  j = nlohmann::json{{"kind", std::string(attack_name(c.kind))},
                     {"target", c.target},
                     {"epsilons", c.epsilons},
                     {"step_size", c.step_size},
                     {"iterations", c.iterations},
                     {"restarts", c.restarts},
                     {"start_radius", c.start_radius},
                     {"momentum", c.momentum},
                     {"nf_etas", c.nf_etas},
                     {"nf_max_iterations", c.nf_max_iterations},
                     {"cw_initial_const", c.cw_initial_const},
                     {"cw_binary_steps", c.cw_binary_steps},
                     {"cw_iterations", c.cw_iterations},
                     {"cw_kappa", c.cw_kappa},
                     {"cw_learning_rate", c.cw_learning_rate},
                     {"pw_noise_levels", c.pw_noise_levels},
                     {"pw_max_passes", c.pw_max_passes},
                     {"count", c.count},
                     {"seed", c.seed}};
  j["delta"] = c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr);
}

/// Missing keys keep their defaults, so configs only list what they change.
inline void from_json(const nlohmann::json& j, AttackConfig& c) {
  c.kind = parse_attack_kind(j.at("kind").get<std::string>());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key) && !j[key].is_null()) j[key].get_to(field);
  };
  get("target", c.target);
  if (j.contains("epsilon")) c.epsilons = {j["epsilon"].get<double>()};
  get("epsilons", c.epsilons);
  get("step_size", c.step_size);
  get("iterations", c.iterations);
  get("restarts", c.restarts);
  get("start_radius", c.start_radius);
  get("momentum", c.momentum);
  get("nf_etas", c.nf_etas);
  get("nf_max_iterations", c.nf_max_iterations);
  get("cw_initial_const", c.cw_initial_const);
  get("cw_binary_steps", c.cw_binary_steps);
  get("cw_iterations", c.cw_iterations);
  get("cw_kappa", c.cw_kappa);
  get("cw_learning_rate", c.cw_learning_rate);
  get("pw_noise_levels", c.pw_noise_levels);
  get("pw_max_passes", c.pw_max_passes);
  get("count", c.count);
  get("seed", c.seed);
  if (j.contains("delta") && !j["delta"].is_null()) c.delta = j["delta"].get<double>();
}

}  // namespace advmap::attacks
