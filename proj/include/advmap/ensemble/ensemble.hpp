#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "advmap/core/error.hpp"
#include "advmap/core/parallel.hpp"
#include "advmap/data/dataset.hpp"
#include "advmap/nn/model_io.hpp"
#include "advmap/nn/train.hpp"

namespace advmap::ensemble {

/// Seed-varied models of one architecture. models.front() is the attack target.
class Ensemble {
 public:
  Ensemble() = default;

  explicit Ensemble(std::vector<nn::Model> models) : models_(std::move(models)) {
    require(!models_.empty(), ErrorCode::kInvalidArgument, "ensemble needs at least one model");
    std::set<std::uint64_t> seen;
    for (const auto& m : models_) {
      require(m.architecture() == models_.front().architecture(), ErrorCode::kInvalidArgument,
              "ensemble members must share one architecture");
      require(seen.insert(m.seed).second, ErrorCode::kInvalidArgument,
              "duplicate seed " + std::to_string(m.seed) + " in ensemble");
    }
  }

  std::size_t size() const { return models_.size(); }
  const nn::Model& operator[](std::size_t i) const { return models_[i]; }
  const nn::Model& target() const { return models_.front(); }
  const std::vector<nn::Model>& models() const { return models_; }
  const nn::Architecture& architecture() const { return models_.front().architecture(); }

  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> s;
    for (const auto& m : models_) s.push_back(m.seed);
    return s;
  }

  /// labels[model][row] for a batch of images (one per row).
  std::vector<std::vector<int>> labels(const nn::Matrix<float>& x, int jobs = 1) const {
    std::vector<std::vector<int>> out(models_.size());
    parallel_for(models_.size(), jobs, [&](std::size_t i) { out[i] = models_[i].net.predict(x); });
    return out;
  }

  std::vector<int> labels(const data::ImageVec& image) const {
    std::vector<int> out;
    for (const auto& m : models_) out.push_back(m.net.predict(image.span()));
    return out;
  }

 private:
  std::vector<nn::Model> models_;
};

inline void validate_seeds(std::span<const std::uint64_t> seeds) {
  require(seeds.size() >= 2, ErrorCode::kInvalidArgument, "an ensemble needs at least 2 seeds");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  require(unique.size() == seeds.size(), ErrorCode::kInvalidArgument, "seed list has duplicates");
}

/// One model per seed; each model records its test error when `test` is given.
inline Ensemble train_ensemble(const nn::Architecture& arch, const data::Dataset& train,
                               std::span<const std::uint64_t> seeds, const nn::TrainConfig& cfg,
                               const data::Dataset* test = nullptr, int jobs = 1) {
  validate_seeds(seeds);
  std::vector<nn::Model> models(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    nn::TrainConfig c = cfg;
    c.seed = seeds[i];
    models[i] = nn::train(arch, train, c, test);
  });
  return Ensemble(std::move(models));
}

/// True iff at least two members assign different labels.
inline bool disagree(std::span<const int> labels) {
  return std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) != labels.end();
}

inline bool in_uncertainty_region(const Ensemble& ens, const data::ImageVec& image) {
  const auto l = ens.labels(image);
  return disagree(l);
}

/// Fraction of rows on which the members disagree.
inline double disagreement_rate(const Ensemble& ens, const nn::Matrix<float>& x, int jobs = 1) {
  require(x.rows() > 0, ErrorCode::kInvalidArgument, "disagreement rate needs images");
  const auto per_model = ens.labels(x, jobs);
  std::size_t hits = 0;
  std::vector<int> column(ens.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t m = 0; m < ens.size(); ++m) column[m] = per_model[m][r];
    hits += disagree(column);
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

inline double disagreement_rate(const Ensemble& ens, std::span<const data::ImageVec> images,
                                int jobs = 1) {
  require(!images.empty(), ErrorCode::kInvalidArgument, "disagreement rate needs images");
  return disagreement_rate(ens, data::to_matrix<float>(images), jobs);
}

struct EnsembleDecision {
  std::vector<int> labels;
  bool alert = false;
  int label = -1;  // consensus label, -1 under ALERT
};

inline EnsembleDecision decide(std::vector<int> labels) {
  EnsembleDecision d;
  d.alert = disagree(labels);
  d.label = d.alert ? -1 : labels.front();
  d.labels = std::move(labels);
  return d;
}

/// Unanimous label, or ALERT with every member's label attached.
inline EnsembleDecision classify_with_alert(const Ensemble& ens, const data::ImageVec& image) {
  return decide(ens.labels(image));
}

// Manifest: architecture, seeds, model paths (relative to the manifest),
// per-model test error.
inline nlohmann::json manifest_json(const Ensemble& ens, const std::vector<std::string>& model_paths) {
  nlohmann::json j;
  j["architecture"] = std::string(nn::arch_kind_name(ens.architecture().kind()));
  j["seeds"] = ens.seeds();
  j["models"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto& m = ens[i];
    j["models"].push_back({{"seed", m.seed},
                           {"path", model_paths[i]},
                           {"test_error", m.record.test_error},
                           {"train_error", m.record.train_error}});
  }
  return j;
}

inline std::string model_file_name(std::size_t index) {
  return "models/model_" + std::to_string(index + 1) + ".bin";
}

inline void save_ensemble(const std::filesystem::path& dir, const Ensemble& ens) {
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    paths.push_back(model_file_name(i));
    nn::save_model(dir / paths.back(), ens[i]);
  }
  io::write_text(dir / "ensemble.json", manifest_json(ens, paths).dump(2) + "\n");
}

inline Ensemble load_ensemble(const std::filesystem::path& manifest_path) {
  require(std::filesystem::exists(manifest_path), ErrorCode::kMissingData,
          "ensemble manifest not found: " + manifest_path.string());
  const auto j = nlohmann::json::parse(io::read_text(manifest_path));
  std::vector<nn::Model> models;
  for (const auto& entry : j.at("models"))
    models.push_back(nn::load_model(manifest_path.parent_path() / entry.at("path").get<std::string>()));
  Ensemble ens(std::move(models));
  require(std::string(nn::arch_kind_name(ens.architecture().kind())) ==
              j.at("architecture").get<std::string>(),
          ErrorCode::kFormat, "manifest architecture does not match model files");
  return ens;
}

}  // namespace advmap::ensemble
