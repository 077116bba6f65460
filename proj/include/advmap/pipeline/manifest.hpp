#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advmap/core/binary_io.hpp"

namespace advmap::pipeline {

/// manifest.json in the output directory. One section per stage with the
/// config hash it ran under and every artifact it wrote (relative paths).
/// Wall-clock times go to timings.json so the manifest stays reproducible.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path out) : out_(std::move(out)) {
    const auto path = out_ / "manifest.json";
    if (std::filesystem::exists(path)) doc_ = nlohmann::json::parse(io::read_text(path));
    if (!doc_.is_object()) doc_ = nlohmann::json::object();
    const auto tpath = out_ / "timings.json";
    if (std::filesystem::exists(tpath)) timings_ = nlohmann::json::parse(io::read_text(tpath));
    if (!timings_.is_object()) timings_ = nlohmann::json::object();
  }

  const std::filesystem::path& out() const { return out_; }
  const nlohmann::json& doc() const { return doc_; }

  bool has_stage(const std::string& stage) const {
    return doc_.contains("stages") && doc_["stages"].contains(stage);
  }

  /// Starts a fresh section for `stage`; drops sections of later stages,
  /// which depend on this one's outputs.
  void begin(const std::string& stage, const std::string& hash, const std::vector<std::string>& later) {
    doc_["format_version"] = 1;
    doc_["config_hash"] = hash;
    auto& stages = doc_["stages"];
    if (!stages.is_object()) stages = nlohmann::json::object();
    for (const auto& s : later) stages.erase(s);
    stages[stage] = {{"config_hash", hash}, {"artifacts", nlohmann::json::array()}};
    current_ = stage;
    started_ = std::chrono::steady_clock::now();
  }

  void artifact(const std::filesystem::path& path) {
    doc_["stages"][current_]["artifacts"].push_back(relative(path));
  }

  void note(const std::string& key, nlohmann::json value) { doc_["stages"][current_][key] = std::move(value); }

  std::string relative(const std::filesystem::path& path) const {
    return std::filesystem::relative(path, out_).generic_string();
  }

  void finish() {
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    timings_[current_] = secs;
    io::write_text(out_ / "manifest.json", doc_.dump(2) + "\n");
    io::write_text(out_ / "timings.json", timings_.dump(2) + "\n");
  }

  /// Every artifact path listed in any stage, relative to the output dir.
  std::vector<std::string> all_artifacts() const {
    std::vector<std::string> out;
    if (!doc_.contains("stages")) return out;
    for (const auto& [_, s] : doc_["stages"].items())
      for (const auto& a : s.at("artifacts")) out.push_back(a.get<std::string>());
    return out;
  }

 private:
  std::filesystem::path out_;
  nlohmann::json doc_, timings_;
  std::string current_;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace advmap::pipeline
