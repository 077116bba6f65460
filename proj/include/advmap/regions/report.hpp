#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advmap/attacks/adversarial_set.hpp"
#include "advmap/ensemble/ensemble.hpp"
#include "advmap/regions/rectangle.hpp"

namespace advmap::regions {

inline constexpr double kDefaultThetaHigh = 0.8;
inline constexpr double kDefaultThetaLow = 0.05;
inline constexpr std::size_t kDefaultSamples = 1000;

enum class RegionType { kType1, kType2, kType3, kUnclassified };

inline std::string_view region_type_name(RegionType t) {
  switch (t) {
    case RegionType::kType1: return "TYPE1";
    case RegionType::kType2: return "TYPE2";
    case RegionType::kType3: return "TYPE3";
    case RegionType::kUnclassified: return "UNCLASSIFIED";
  }
  return "?";
}

inline RegionType parse_region_type(std::string_view s) {
  for (auto t : {RegionType::kType1, RegionType::kType2, RegionType::kType3, RegionType::kUnclassified})
    if (region_type_name(t) == s) return t;
  throw Error(ErrorCode::kFormat, "unknown region type: " + std::string(s));
}

/// TYPE1: the target model fails, some other model is right.
/// TYPE2: the target model is right, some other model fails.
/// TYPE3: every model fails.
inline RegionType classify_region(std::span<const double> rates, std::size_t target_model, double theta_high,
                                  double theta_low) {
  require(target_model < rates.size(), ErrorCode::kInvalidArgument, "target model outside rate vector");
  bool all_high = true, other_high = false, other_low = false;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    all_high = all_high && rates[i] >= theta_high;
    if (i == target_model) continue;
    other_high = other_high || rates[i] >= theta_high;
    other_low = other_low || rates[i] <= theta_low;
  }
  const double own = rates[target_model];
  if (own >= theta_high && other_low) return RegionType::kType1;
  if (own <= theta_low && other_high) return RegionType::kType2;
  if (all_high) return RegionType::kType3;
  return RegionType::kUnclassified;
}

inline bool is_uncertainty_type(RegionType t) { return t == RegionType::kType1 || t == RegionType::kType2; }

struct RegionReport {
  std::string label;
  attacks::AttackKind kind = attacks::AttackKind::kFgsm;
  int true_class = -1, target_class = -1;
  std::size_t target_model = 0;
  std::size_t b = 0, m = 0, samples = 0, shrunk = 0;
  double smallest_size = 0.0;
  double delta = 0.0;
  std::vector<double> rates;  // per model: fraction of samples labeled != true class
  double disagreement = 0.0;  // fraction of samples on which the ensemble disagrees
  attacks::L2Stats sample_l2, attack_l2;
  RegionType type = RegionType::kUnclassified;
  double theta_high = kDefaultThetaHigh, theta_low = kDefaultThetaLow, tau = kDefaultTau;
};

/// Per-model misclassification rates over `samples`, their L2 statistics
/// against the clean image, and the attack set's own statistics.
inline RegionReport evaluate(const HyperRectangle& rect, const ensemble::Ensemble& ens,
                             std::span<const data::ImageVec> samples, const attacks::AdversarialSet& set,
                             double theta_high = kDefaultThetaHigh, double theta_low = kDefaultThetaLow,
                             int jobs = 1) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "no samples to evaluate");
  RegionReport r;
  r.label = rect.label();
  r.kind = rect.kind;
  r.true_class = rect.true_class;
  r.target_class = rect.target_class;
  r.target_model = rect.target_model;
  r.b = rect.b();
  r.m = rect.m;
  r.samples = samples.size();
  r.smallest_size = rect.smallest_size;
  r.delta = set.delta;
  r.theta_high = theta_high;
  r.theta_low = theta_low;

  const auto x = data::to_matrix<float>(samples);
  const auto labels = ens.labels(x, jobs);
  r.rates.assign(ens.size(), 0.0);
  for (std::size_t k = 0; k < ens.size(); ++k) {
    std::size_t wrong = 0;
    for (int l : labels[k]) wrong += l != rect.true_class;
    r.rates[k] = static_cast<double>(wrong) / static_cast<double>(samples.size());
  }
  std::size_t split = 0;
  std::vector<int> column(ens.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t k = 0; k < ens.size(); ++k) column[k] = labels[k][s];
    split += ensemble::disagree(column);
  }
  r.disagreement = static_cast<double>(split) / static_cast<double>(samples.size());

  std::vector<double> d(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) d[s] = attacks::l2_distance(samples[s].span(), set.clean.span());
  r.sample_l2 = attacks::L2Stats::of(d);
  r.attack_l2 = set.l2_stats();
  r.type = classify_region(r.rates, r.target_model, theta_high, theta_low);
  return r;
}

inline nlohmann::json report_json(const RegionReport& r) {
  return {{"label", r.label},
          {"attack", std::string(attacks::attack_name(r.kind))},
          {"true_class", r.true_class},
          {"target_class", r.target_class},
          {"target_model", r.target_model},
          {"b", r.b},
          {"m", r.m},
          {"smallest_size", r.smallest_size},
          {"samples", r.samples},
          {"shrunk", r.shrunk},
          {"delta", r.delta},
          {"rates", r.rates},
          {"disagreement", r.disagreement},
          {"sample_l2", {{"min", r.sample_l2.min}, {"max", r.sample_l2.max}, {"mean", r.sample_l2.mean}}},
          {"attack_l2", {{"min", r.attack_l2.min}, {"max", r.attack_l2.max}, {"mean", r.attack_l2.mean}}},
          {"type", std::string(region_type_name(r.type))},
          {"theta_high", r.theta_high},
          {"theta_low", r.theta_low},
          {"tau", r.tau}};
}

inline RegionReport report_from_json(const nlohmann::json& j) {
  RegionReport r;
  r.label = j.at("label");
  r.kind = attacks::parse_attack_kind(j.at("attack").get<std::string>());
  r.true_class = j.at("true_class");
  r.target_class = j.at("target_class");
  r.target_model = j.at("target_model");
  r.b = j.at("b");
  r.m = j.at("m");
  r.smallest_size = j.at("smallest_size");
  r.samples = j.at("samples");
  r.shrunk = j.at("shrunk");
  r.delta = j.at("delta");
  r.rates = j.at("rates").get<std::vector<double>>();
  r.disagreement = j.at("disagreement");
  auto stats = [](const nlohmann::json& s) { return attacks::L2Stats{s.at("min"), s.at("max"), s.at("mean")}; };
  r.sample_l2 = stats(j.at("sample_l2"));
  r.attack_l2 = stats(j.at("attack_l2"));
  r.type = parse_region_type(j.at("type").get<std::string>());
  r.theta_high = j.at("theta_high");
  r.theta_low = j.at("theta_low");
  r.tau = j.at("tau");
  return r;
}

}  // namespace advmap::regions
