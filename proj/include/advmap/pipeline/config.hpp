#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "advmap/attacks/config.hpp"
#include "advmap/core/binary_io.hpp"
#include "advmap/data/dataset.hpp"
#include "advmap/nn/architecture.hpp"
#include "advmap/nn/train.hpp"
#include "advmap/regions/report.hpp"

namespace advmap::nn {

// Lives beside TrainConfig's namespace so nlohmann finds it by ADL.
inline void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = {{"epochs", t.epochs},
       {"batch_size", t.batch_size},
       {"learning_rate", t.learning_rate},
       {"optimizer", t.optimizer},
       {"precision", static_cast<int>(t.precision)}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
  if (j.contains("epochs")) j["epochs"].get_to(t.epochs);
  if (j.contains("batch_size")) j["batch_size"].get_to(t.batch_size);
  if (j.contains("learning_rate")) j["learning_rate"].get_to(t.learning_rate);
  if (j.contains("optimizer")) j["optimizer"].get_to(t.optimizer);
  if (j.contains("precision")) {
    const int bits = j["precision"];
    require(bits == 32 || bits == 64, ErrorCode::kInvalidArgument, "precision must be 32 or 64");
    t.precision = static_cast<Precision>(bits);
  }
}

}  // namespace advmap::nn

namespace advmap::pipeline {

/// Which clean test images to attack: explicit indices, or the first
/// `count` images of `label` that every ensemble member classifies correctly.
struct CleanSelector {
  data::Split split = data::Split::kTest;
  std::vector<std::size_t> indices;
  int label = 1;
  std::size_t count = 1;
};

struct ExperimentConfig {
  std::string data_dir = "data/mnist";
  nn::ArchKind architecture = nn::ArchKind::kLenet;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  nn::TrainConfig train;  // per-model seed comes from `seeds`
  std::optional<std::size_t> train_limit;
  CleanSelector clean;
  std::vector<attacks::AttackConfig> attacks;
  std::vector<int> targets;  // empty: every class but the true one
  std::optional<double> delta;
  double tau = regions::kDefaultTau;
  double theta_high = regions::kDefaultThetaHigh;
  double theta_low = regions::kDefaultThetaLow;
  std::size_t samples = regions::kDefaultSamples;
  regions::BaseMode base_mode = regions::BaseMode::kMedian;
  bool restrict_to_ball = true;
  std::size_t min_set_size = 2;
  std::uint64_t seed = 0;  // master seed for attacks and region sampling
  std::string out = "runs/default";
  int jobs = 1;

  void validate() const {
    require(architecture != nn::ArchKind::kCustom, ErrorCode::kInvalidArgument,
            "experiments use the MLP or LENET architecture");
    train.validate();
    require(seeds.size() >= 2, ErrorCode::kInvalidArgument, "an ensemble needs at least 2 seeds");
    for (std::size_t i = 0; i < seeds.size(); ++i)
      for (std::size_t j = i + 1; j < seeds.size(); ++j)
        require(seeds[i] != seeds[j], ErrorCode::kInvalidArgument, "duplicate seed " + std::to_string(seeds[i]));
    require(theta_low >= 0.0 && theta_low <= 1.0 && theta_high >= 0.0 && theta_high <= 1.0,
            ErrorCode::kInvalidArgument, "thresholds must lie in [0,1]");
    require(theta_low < theta_high, ErrorCode::kInvalidArgument, "theta_low must be below theta_high");
    require(tau >= 0.0 && tau <= 1.0, ErrorCode::kInvalidArgument, "tau must lie in [0,1]");
    require(samples >= 1, ErrorCode::kInvalidArgument, "sample count must be >= 1");
    require(!delta || *delta > 0.0, ErrorCode::kInvalidArgument, "delta must be > 0");
    require(!clean.indices.empty() || clean.count >= 1, ErrorCode::kInvalidArgument,
            "clean selector picks no images");
    require(clean.label >= 0 && clean.label <= 9, ErrorCode::kInvalidArgument, "clean label must be a digit");
    for (int t : targets)
      require(t >= 0 && t <= 9, ErrorCode::kInvalidArgument, "target classes must be digits");
    for (const auto& a : attacks) a.validate();
    require(min_set_size >= 1, ErrorCode::kInvalidArgument, "min_set_size must be >= 1");
    require(jobs >= 1, ErrorCode::kInvalidArgument, "jobs must be >= 1");
  }

  nn::Architecture arch() const {
    return architecture == nn::ArchKind::kMlp ? nn::Architecture::mlp() : nn::Architecture::lenet();
  }
};

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  j["data_dir"] = c.data_dir;
  j["architecture"] = std::string(nn::arch_kind_name(c.architecture));
  j["seeds"] = c.seeds;
  j["train"] = c.train;
  j["train_limit"] = c.train_limit ? nlohmann::json(*c.train_limit) : nlohmann::json(nullptr);
  j["clean"] = {{"split", std::string(data::split_name(c.clean.split))},
                {"indices", c.clean.indices},
                {"label", c.clean.label},
                {"count", c.clean.count}};
  j["attacks"] = c.attacks;
  j["targets"] = c.targets;
  j["delta"] = optional_json(c.delta);
  j["tau"] = c.tau;
  j["theta_high"] = c.theta_high;
  j["theta_low"] = c.theta_low;
  j["samples"] = c.samples;
  j["base_mode"] = std::string(regions::base_mode_name(c.base_mode));
  j["restrict_to_ball"] = c.restrict_to_ball;
  j["min_set_size"] = c.min_set_size;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["jobs"] = c.jobs;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known = {
      "data_dir", "architecture", "seeds",   "train",      "train_limit", "clean",
      "attacks",  "targets",      "delta",   "tau",        "theta_high",  "theta_low",
      "samples",  "base_mode",    "restrict_to_ball", "min_set_size", "seed", "out", "jobs"};
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(), ErrorCode::kInvalidArgument,
            "unknown config key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key) && !j[key].is_null()) j[key].get_to(field);
  };
  get("data_dir", c.data_dir);
  if (j.contains("architecture")) c.architecture = nn::parse_arch_kind(j["architecture"].get<std::string>());
  get("seeds", c.seeds);
  get("train", c.train);
  if (j.contains("train_limit") && !j["train_limit"].is_null()) c.train_limit = j["train_limit"].get<std::size_t>();
  if (j.contains("clean")) {
    const auto& s = j["clean"];
    if (s.contains("split")) c.clean.split = data::parse_split(s["split"].get<std::string>());
    if (s.contains("indices")) s["indices"].get_to(c.clean.indices);
    if (s.contains("label")) s["label"].get_to(c.clean.label);
    if (s.contains("count")) s["count"].get_to(c.clean.count);
  }
  get("attacks", c.attacks);
  get("targets", c.targets);
  if (j.contains("delta") && !j["delta"].is_null()) c.delta = j["delta"].get<double>();
  get("tau", c.tau);
  get("theta_high", c.theta_high);
  get("theta_low", c.theta_low);
  get("samples", c.samples);
  if (j.contains("base_mode")) c.base_mode = regions::parse_base_mode(j["base_mode"].get<std::string>());
  get("restrict_to_ball", c.restrict_to_ball);
  get("min_set_size", c.min_set_size);
  get("seed", c.seed);
  get("out", c.out);
  get("jobs", c.jobs);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kMissingData, "config not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  return cfg;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that determines results. The output directory and
/// worker count are excluded: neither changes any artifact.
inline std::string config_hash(const ExperimentConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("out");
  j.erase("jobs");
  return fmt::format("{:016x}", fnv1a64(j.dump()));
}

}  // namespace advmap::pipeline
