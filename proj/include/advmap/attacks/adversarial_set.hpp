#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "advmap/attacks/config.hpp"
#include "advmap/attacks/norms.hpp"
#include "advmap/core/binary_io.hpp"
#include "advmap/data/dataset.hpp"

namespace advmap::attacks {

struct L2Stats {
  double min = 0.0, max = 0.0, mean = 0.0;

  static L2Stats of(std::span<const double> values) {
    if (values.empty()) return {};
    L2Stats s{values[0], values[0], 0.0};
    double sum = 0.0;
    for (double v : values) {
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      sum += v;
    }
    // Clamp guards against the sum rounding a hair outside [min, max].
    s.mean = std::clamp(sum / static_cast<double>(values.size()), s.min, s.max);
    return s;
  }
};

/// I_k(t): examples from attack k that the target model labels t (t != c).
struct AdversarialSet {
  data::ImageVec clean;
  int true_class = -1;
  std::size_t target_model = 0;  // index into the ensemble; 0 is M_1
  AttackKind kind = AttackKind::kFgsm;
  int target_class = -1;
  double delta = 0.0;
  std::size_t requested = 0;
  bool shortfall = false;
  std::vector<AttackConfig> runs;  // config of every run merged in
  std::vector<data::ImageVec> examples;
  std::vector<double> l2;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  L2Stats l2_stats() const { return L2Stats::of(l2); }

  /// Mean per-example count of perturbed pixels (the "d" of a table row).
  double mean_perturbed_pixels() const {
    if (examples.empty()) return 0.0;
    double total = 0.0;
    for (const auto& e : examples) total += static_cast<double>(perturbed_count(e.span(), clean.span()));
    return total / static_cast<double>(examples.size());
  }

  /// Pixels perturbed by at least one example (m).
  std::size_t perturbed_union() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < clean.size(); ++i)
      for (const auto& e : examples)
        if (is_perturbed(e.pixels[i], clean.pixels[i])) {
          ++n;
          break;
        }
    return n;
  }

  std::string name() const {
    return std::string(attack_name(kind)) + "_" + std::to_string(true_class) + "to" +
           std::to_string(target_class);
  }
};

// On disk: <stem>.json header plus <stem>.bin holding the clean image then
// every example as little-endian float32 rows of length h.
inline nlohmann::json set_header(const AdversarialSet& set, const std::string& pixel_file) {
  const auto stats = set.l2_stats();
  nlohmann::json j;
  j["format_version"] = 1;
  j["clean_image_id"] = set.clean.source ? set.clean.source->str() : "";
  j["true_class"] = set.true_class;
  j["target_model"] = set.target_model;
  j["attack"] = std::string(attack_name(set.kind));
  j["target_class"] = set.target_class;
  j["delta"] = set.delta;
  j["requested"] = set.requested;
  j["shortfall"] = set.shortfall;
  j["runs"] = set.runs;
  j["count"] = set.size();
  j["dim"] = set.clean.size();
  j["l2"] = set.l2;
  j["l2_min"] = stats.min;
  j["l2_max"] = stats.max;
  j["l2_mean"] = stats.mean;
  j["mean_perturbed_pixels"] = set.mean_perturbed_pixels();
  j["perturbed_union"] = set.perturbed_union();
  j["pixel_file"] = pixel_file;
  return j;
}

inline void save_set(const std::filesystem::path& stem, const AdversarialSet& set) {
  const auto json_path = std::filesystem::path(stem.string() + ".json");
  const auto bin_path = std::filesystem::path(stem.string() + ".bin");
  io::LeWriter w;
  w.f32s(set.clean.pixels);
  for (const auto& e : set.examples) w.f32s(e.pixels);
  io::write_file(bin_path, w.buffer());
  io::write_text(json_path, set_header(set, bin_path.filename().string()).dump(2) + "\n");
}

inline AdversarialSet load_set(const std::filesystem::path& json_path) {
  const auto j = nlohmann::json::parse(io::read_text(json_path));
  AdversarialSet set;
  set.true_class = j.at("true_class");
  set.target_model = j.at("target_model");
  set.kind = parse_attack_kind(j.at("attack").get<std::string>());
  set.target_class = j.at("target_class");
  set.delta = j.at("delta");
  set.requested = j.at("requested");
  set.shortfall = j.at("shortfall");
  set.runs = j.at("runs").get<std::vector<AttackConfig>>();
  set.l2 = j.at("l2").get<std::vector<double>>();
  const std::size_t dim = j.at("dim"), count = j.at("count");
  const auto bytes = io::read_file(json_path.parent_path() / j.at("pixel_file").get<std::string>());
  require(bytes.size() == (count + 1) * dim * 4, ErrorCode::kFormat,
          "pixel block size mismatch in " + json_path.string());
  io::LeReader r(bytes);
  set.clean.pixels.resize(dim);
  r.f32s(set.clean.pixels);
  set.clean.label = set.true_class;
  const std::string id = j.at("clean_image_id");
  if (auto colon = id.find(':'); colon != std::string::npos)
    set.clean.source = data::SourceId{data::parse_split(id.substr(0, colon)), std::stoul(id.substr(colon + 1))};
  set.examples.resize(count);
  for (auto& e : set.examples) {
    e.pixels.resize(dim);
    r.f32s(e.pixels);
    e.label = set.true_class;
  }
  return set;
}

}  // namespace advmap::attacks
