#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "advmap/attacks/generate.hpp"
#include "advmap/core/parallel.hpp"
#include "advmap/data/idx.hpp"
#include "advmap/ensemble/ensemble.hpp"
#include "advmap/pipeline/config.hpp"
#include "advmap/pipeline/manifest.hpp"
#include "advmap/pipeline/tables.hpp"
#include "advmap/regions/rectangle.hpp"
#include "advmap/regions/report.hpp"

namespace advmap::pipeline {

namespace fs = std::filesystem;

inline const std::vector<std::string> kStageOrder = {"train", "attack", "regions", "audit", "report"};

namespace detail {

inline std::vector<std::string> stages_after(const std::string& stage) {
  auto it = std::find(kStageOrder.begin(), kStageOrder.end(), stage);
  return {it + 1, kStageOrder.end()};
}

inline void log(const std::string& line) { fmt::print(stderr, "{}\n", line); }

inline void write_resolved(const ExperimentConfig& cfg, RunManifest& m) {
  nlohmann::json j = cfg;
  j.erase("out");
  j.erase("jobs");
  io::write_text(m.out() / "resolved_config.json", j.dump(2) + "\n");
  m.artifact(m.out() / "resolved_config.json");
}

inline RunManifest start(const ExperimentConfig& cfg, const std::string& stage) {
  cfg.validate();
  RunManifest m(cfg.out);
  m.begin(stage, config_hash(cfg), stages_after(stage));
  write_resolved(cfg, m);
  return m;
}

inline ensemble::Ensemble load_ensemble(const ExperimentConfig& cfg) {
  const fs::path manifest = fs::path(cfg.out) / "ensemble.json";
  require(fs::exists(manifest), ErrorCode::kMissingData, "no trained ensemble in " + cfg.out + " (run train first)");
  auto ens = ensemble::load_ensemble(manifest);
  require(ens.seeds() == cfg.seeds && ens.architecture().kind() == cfg.architecture, ErrorCode::kInvalidArgument,
          "ensemble in " + cfg.out + " was trained with a different architecture or seed list");
  return ens;
}

inline nlohmann::json read_index(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), ErrorCode::kMissingData, "missing " + path.string() + " (run " + producer + " first)");
  return nlohmann::json::parse(io::read_text(path));
}

inline std::uint64_t derived_seed(std::uint64_t master, std::string_view key) {
  return CounterRng(master).fork(fnv1a64(key)).next_u64();
}

inline void save_samples(const fs::path& path, std::span<const data::ImageVec> samples) {
  io::LeWriter w;
  for (const auto& s : samples) w.f32s(s.pixels);
  io::write_file(path, w.buffer());
}

}  // namespace detail

/// Reads `count * dim` little-endian floats written by the regions stage.
inline std::vector<data::ImageVec> load_samples(const fs::path& path, std::size_t dim) {
  const auto bytes = io::read_file(path);
  require(dim > 0 && bytes.size() % (dim * 4) == 0, ErrorCode::kFormat, "sample file size mismatch: " + path.string());
  io::LeReader r(bytes);
  std::vector<data::ImageVec> out(bytes.size() / (dim * 4));
  for (auto& im : out) {
    im.pixels.resize(dim);
    r.f32s(im.pixels);
  }
  return out;
}

inline data::Dataset load_split(const ExperimentConfig& cfg, data::Split split) {
  return data::load_mnist(cfg.data_dir, split);
}

// ---------------------------------------------------------------------------
// train

inline Table baseline_table(const ensemble::Ensemble& ens) {
  Table t;
  t.title = std::string("Baseline error (") + std::string(nn::arch_kind_name(ens.architecture().kind())) + ")";
  t.headers = {""};
  for (const auto& h : model_headers(ens.size())) t.headers.push_back(h);
  std::vector<std::string> seeds{"seed"}, train{"train error"}, test{"test error"};
  for (std::size_t i = 0; i < ens.size(); ++i) {
    seeds.push_back(std::to_string(ens[i].seed));
    train.push_back(fixed(ens[i].record.train_error, 4));
    test.push_back(fixed(ens[i].record.test_error, 4));
  }
  t.add(seeds);
  t.add(train);
  t.add(test);
  return t;
}

inline ensemble::Ensemble cmd_train(const ExperimentConfig& cfg) {
  auto m = detail::start(cfg, "train");
  auto train = load_split(cfg, data::Split::kTrain);
  if (cfg.train_limit) train = data::head(train, *cfg.train_limit);
  const auto test = load_split(cfg, data::Split::kTest);
  detail::log(fmt::format("[train] {} x {} on {} images, {} epochs", cfg.seeds.size(),
                          nn::arch_kind_name(cfg.architecture), train.size(), cfg.train.epochs));
  auto ens = ensemble::train_ensemble(cfg.arch(), train, cfg.seeds, cfg.train, &test, cfg.jobs);
  ensemble::save_ensemble(cfg.out, ens);
  m.artifact(fs::path(cfg.out) / "ensemble.json");
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto model = fs::path(cfg.out) / ensemble::model_file_name(i);
    m.artifact(model);
    m.artifact(nn::sidecar_path(model));
    detail::log(fmt::format("[train] M{} seed {} test error {:.4f}", i + 1, ens[i].seed, ens[i].record.test_error));
  }
  for (const auto& p : baseline_table(ens).save(fs::path(cfg.out) / "tables" / "baseline")) m.artifact(p);
  m.finish();
  return ens;
}

// ---------------------------------------------------------------------------
// attack

/// Clean images chosen by the selector. Label mode keeps only images every
/// model classifies correctly, so each model's behavior on the region is
/// measured against a correct starting point.
inline std::vector<data::ImageVec> select_clean(const ExperimentConfig& cfg, const ensemble::Ensemble& ens,
                                                const data::Dataset& pool) {
  std::vector<data::ImageVec> out;
  if (!cfg.clean.indices.empty()) {
    for (std::size_t idx : cfg.clean.indices) {
      require(idx < pool.size(), ErrorCode::kInvalidArgument, "clean index " + std::to_string(idx) + " out of range");
      const auto& im = pool[idx];
      require(ens.target().net.predict(im.span()) == *im.label, ErrorCode::kInvalidArgument,
              "clean image " + im.source->str() + " is misclassified by the target model");
      out.push_back(im);
    }
    return out;
  }
  for (const auto& im : pool.images) {
    if (*im.label != cfg.clean.label) continue;
    const auto labels = ens.labels(im);
    if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == *im.label; })) out.push_back(im);
    if (out.size() == cfg.clean.count) break;
  }
  require(!out.empty(), ErrorCode::kInvalidArgument,
          "no test image of label " + std::to_string(cfg.clean.label) + " is classified correctly by every model");
  return out;
}

/// Per-model fraction of set examples labeled other than the true class.
inline std::vector<double> transfer_rates(const ensemble::Ensemble& ens, const attacks::AdversarialSet& set) {
  std::vector<double> rates(ens.size(), 0.0);
  if (set.empty()) return rates;
  const auto labels = ens.labels(data::to_matrix<float>(std::span<const data::ImageVec>(set.examples)));
  for (std::size_t k = 0; k < ens.size(); ++k) {
    std::size_t wrong = 0;
    for (int l : labels[k]) wrong += l != set.true_class;
    rates[k] = static_cast<double>(wrong) / static_cast<double>(set.size());
  }
  return rates;
}

inline std::string image_dir_name(const data::ImageVec& im) {
  return im.source ? fmt::format("{}_{}", data::split_name(im.source->split), im.source->index) : "image";
}

inline std::string region_row_label(attacks::AttackKind kind, std::size_t d, int c, int t) {
  return fmt::format("{} {}d {}->{}", attacks::attack_label(kind), d, c, t);
}

inline void cmd_attack(const ExperimentConfig& cfg) {
  auto m = detail::start(cfg, "attack");
  const auto ens = detail::load_ensemble(cfg);
  const auto pool = load_split(cfg, cfg.clean.split);
  const auto images = select_clean(cfg, ens, pool);

  struct Task {
    std::size_t image, roster;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t a = 0; a < cfg.attacks.size(); ++a) tasks.push_back({i, a});

  std::vector<std::vector<attacks::AdversarialSet>> results(tasks.size());
  parallel_for(tasks.size(), cfg.jobs, [&](std::size_t k) {
    const auto& im = images[tasks[k].image];
    auto acfg = cfg.attacks[tasks[k].roster];
    const std::string key = fmt::format("{}/{}", image_dir_name(im), tasks[k].roster);
    acfg.seed = detail::derived_seed(cfg.seed ^ acfg.seed, key);
    if (!acfg.delta) acfg.delta = cfg.delta;
    std::vector<int> targets;
    for (int t : cfg.targets.empty() ? attacks::all_targets(*im.label, 10) : cfg.targets)
      if (t != *im.label) targets.push_back(t);
    results[k] = attacks::generate_sets(ens.target().net, im, acfg, targets, 0);
    detail::log(fmt::format("[attack] {} {} done", image_dir_name(im), attacks::attack_name(acfg.kind)));
  });

  Table table;
  table.title = "Attack misclassification rates";
  table.headers = {"Attack", "image", "n", "m", "shortfall"};
  for (const auto& h : model_headers(ens.size())) table.headers.push_back(h);
  nlohmann::json index = nlohmann::json::array(), shortfalls = nlohmann::json::array();
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    for (const auto& set : results[k]) {
      const std::string img = image_dir_name(set.clean);
      if (set.shortfall)
        shortfalls.push_back({{"image", img}, {"set", set.name()}, {"count", set.size()}, {"requested", set.requested}});
      if (set.empty()) continue;
      const auto stem = fs::path(cfg.out) / "sets" / img / fmt::format("{}_r{}", set.name(), tasks[k].roster);
      attacks::save_set(stem, set);
      m.artifact(stem.string() + ".json");
      m.artifact(stem.string() + ".bin");
      const auto d = static_cast<std::size_t>(std::lround(set.mean_perturbed_pixels()));
      std::vector<std::string> row{region_row_label(set.kind, d, set.true_class, set.target_class), img,
                                   std::to_string(set.size()), std::to_string(set.perturbed_union()),
                                   set.shortfall ? "yes" : "no"};
      for (double r : transfer_rates(ens, set)) row.push_back(fixed(r));
      table.add(row);
      index.push_back({{"path", m.relative(stem.string() + ".json")},
                       {"image", img},
                       {"attack", std::string(attacks::attack_name(set.kind))},
                       {"target_class", set.target_class},
                       {"count", set.size()},
                       {"shortfall", set.shortfall}});
    }
  }
  const auto index_path = fs::path(cfg.out) / "sets" / "index.json";
  io::write_text(index_path, index.dump(2) + "\n");
  m.artifact(index_path);
  for (const auto& p : table.save(fs::path(cfg.out) / "tables" / "transfer")) m.artifact(p);
  m.note("clean_images", [&] {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& im : images) ids.push_back(im.source->str());
    return ids;
  }());
  m.note("shortfalls", shortfalls);
  m.finish();
}

// ---------------------------------------------------------------------------
// regions

struct RegionArtifacts {
  regions::RegionReport report;
  std::string image, rect_path, samples_path, report_path;
};

inline std::vector<RegionArtifacts> cmd_regions(const ExperimentConfig& cfg) {
  auto m = detail::start(cfg, "regions");
  const auto ens = detail::load_ensemble(cfg);
  const auto index = detail::read_index(fs::path(cfg.out) / "sets" / "index.json", "attack");

  std::vector<nlohmann::json> entries(index.begin(), index.end());
  std::vector<std::optional<RegionArtifacts>> results(entries.size());
  std::vector<std::string> too_small(entries.size());
  parallel_for(entries.size(), cfg.jobs, [&](std::size_t k) {
    const auto& e = entries[k];
    const fs::path set_path = fs::path(cfg.out) / e.at("path").get<std::string>();
    const auto set = attacks::load_set(set_path);
    if (set.size() < cfg.min_set_size) {
      too_small[k] = e.at("path");
      return;
    }
    const auto ranked = regions::compute_intervals(set);
    const auto rect = regions::build_rectangle(set, ranked, regions::choose_b(ranked, cfg.tau), cfg.base_mode);
    const std::string stem_name = set_path.stem().string();
    const std::uint64_t seed = detail::derived_seed(cfg.seed, e.at("path").get<std::string>());
    regions::BallSampleStats stats;
    const auto samples = cfg.restrict_to_ball
                             ? regions::sample_in_ball(rect, cfg.samples, seed, set.clean.span(), set.delta, 200, &stats)
                             : regions::sample(rect, cfg.samples, seed);
    auto report = regions::evaluate(rect, ens, samples, set, cfg.theta_high, cfg.theta_low);
    report.tau = cfg.tau;
    report.shrunk = stats.shrunk;
    report.label = region_row_label(rect.kind, rect.b(), rect.true_class, rect.target_class);

    const fs::path dir = fs::path(cfg.out) / "regions" / e.at("image").get<std::string>();
    RegionArtifacts a{report, e.at("image"), (dir / (stem_name + ".rect.json")).string(),
                      (dir / (stem_name + ".samples.bin")).string(), (dir / (stem_name + ".report.json")).string()};
    io::write_text(a.rect_path, regions::rectangle_json(rect).dump() + "\n");
    detail::save_samples(a.samples_path, samples);
    nlohmann::json rj = regions::report_json(report);
    rj["set"] = e.at("path");
    rj["samples_file"] = fs::path(a.samples_path).filename().string();
    rj["dim"] = rect.dim();
    io::write_text(a.report_path, rj.dump(2) + "\n");
    results[k] = std::move(a);
  });

  Table t3, t4;
  t3.title = "Misclassification rates in hyper-rectangles";
  t3.headers = {"Region", "image", "s_(b)"};
  for (const auto& h : model_headers(ens.size())) t3.headers.push_back(h);
  t3.headers.push_back("type");
  t3.headers.push_back("disagreement");
  t4.title = "L2 distance to the clean image";
  t4.headers = {"Region", "image", "sample L2 min", "sample L2 max", "sample L2 mean",
                "attack L2 min", "attack L2 max", "attack L2 mean", "delta"};
  std::vector<RegionArtifacts> out;
  nlohmann::json index_out = nlohmann::json::array(), small = nlohmann::json::array();
  std::map<std::string, int> type_counts;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (!too_small[k].empty()) small.push_back(too_small[k]);
    if (!results[k]) continue;
    const auto& a = *results[k];
    const auto& r = a.report;
    std::vector<std::string> row{r.label, a.image, fixed(r.smallest_size, 4)};
    for (double v : r.rates) row.push_back(fixed(v));
    row.push_back(std::string(regions::region_type_name(r.type)));
    row.push_back(fixed(r.disagreement));
    t3.add(row);
    t4.add({r.label, a.image, fixed(r.sample_l2.min), fixed(r.sample_l2.max), fixed(r.sample_l2.mean),
            fixed(r.attack_l2.min), fixed(r.attack_l2.max), fixed(r.attack_l2.mean), fixed(r.delta)});
    for (const auto& p : {a.rect_path, a.samples_path, a.report_path}) m.artifact(p);
    index_out.push_back(m.relative(a.report_path));
    ++type_counts[std::string(regions::region_type_name(r.type))];
    out.push_back(a);
  }
  const auto index_path = fs::path(cfg.out) / "regions" / "index.json";
  io::write_text(index_path, index_out.dump(2) + "\n");
  m.artifact(index_path);
  for (const auto& p : t3.save(fs::path(cfg.out) / "tables" / "regions")) m.artifact(p);
  for (const auto& p : t4.save(fs::path(cfg.out) / "tables" / "l2")) m.artifact(p);
  m.note("too_small", small);
  m.note("region_types", type_counts);
  m.finish();
  return out;
}

inline std::vector<RegionArtifacts> load_regions(const ExperimentConfig& cfg) {
  const auto index = detail::read_index(fs::path(cfg.out) / "regions" / "index.json", "regions");
  std::vector<RegionArtifacts> out;
  for (const auto& rel : index) {
    const fs::path p = fs::path(cfg.out) / rel.get<std::string>();
    const auto j = nlohmann::json::parse(io::read_text(p));
    RegionArtifacts a;
    a.report = regions::report_from_json(j);
    a.image = p.parent_path().filename().string();
    a.report_path = p.string();
    a.samples_path = (p.parent_path() / j.at("samples_file").get<std::string>()).string();
    a.rect_path = (p.parent_path() / (p.stem().stem().string() + ".rect.json")).string();
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// audit

struct AlertStats {
  double disagreement = 0.0;  // samples with any disagreement (ALERT)
  double coverage = 0.0;      // correct consensus or ALERT
  double any_correct = 0.0;   // at least one model right
  double silent_wrong = 0.0;  // unanimous wrong label, missed by the alert
};

inline AlertStats alert_stats(const ensemble::Ensemble& ens, std::span<const data::ImageVec> images, int true_class,
                              int jobs = 1) {
  AlertStats s;
  if (images.empty()) return s;
  const auto labels = ens.labels(data::to_matrix<float>(images), jobs);
  std::vector<int> col(ens.size());
  std::size_t alert = 0, covered = 0, any = 0, silent = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t k = 0; k < ens.size(); ++k) col[k] = labels[k][i];
    const auto d = ensemble::decide(col);
    alert += d.alert;
    covered += d.alert || d.label == true_class;
    any += std::find(col.begin(), col.end(), true_class) != col.end();
    silent += !d.alert && d.label != true_class;
  }
  const auto n = static_cast<double>(images.size());
  s.disagreement = static_cast<double>(alert) / n;
  s.coverage = static_cast<double>(covered) / n;
  s.any_correct = static_cast<double>(any) / n;
  s.silent_wrong = static_cast<double>(silent) / n;
  return s;
}

struct AuditResult {
  double clean_disagreement = 0.0;
  std::vector<double> test_errors;
  double error_sum = 0.0;
  std::vector<std::pair<RegionArtifacts, AlertStats>> regions;
};

inline AuditResult cmd_audit(const ExperimentConfig& cfg) {
  auto m = detail::start(cfg, "audit");
  const auto ens = detail::load_ensemble(cfg);
  const auto test = load_split(cfg, data::Split::kTest);
  AuditResult res;
  std::vector<std::vector<int>> labels(ens.size());
  const auto x = data::to_matrix<float>(std::span<const data::ImageVec>(test.images));
  labels = ens.labels(x, cfg.jobs);
  std::size_t split = 0;
  res.test_errors.assign(ens.size(), 0.0);
  std::vector<int> col(ens.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t k = 0; k < ens.size(); ++k) {
      col[k] = labels[k][i];
      res.test_errors[k] += col[k] != *test[i].label;
    }
    split += ensemble::disagree(col);
  }
  for (auto& e : res.test_errors) {
    e /= static_cast<double>(test.size());
    res.error_sum += e;
  }
  res.clean_disagreement = static_cast<double>(split) / static_cast<double>(test.size());

  Table t;
  t.title = "Ensemble disagreement audit";
  t.headers = {"Inputs", "image", "type", "disagreement", "alert coverage", "any model correct", "silent errors"};
  t.add({"clean test set", "-", "-", fixed(res.clean_disagreement, 4), "-", "-", "-"});
  for (const auto& a : load_regions(cfg)) {
    const auto dim = ens.architecture().input_size();
    const auto samples = load_samples(a.samples_path, dim);
    const auto s = alert_stats(ens, samples, a.report.true_class, cfg.jobs);
    t.add({a.report.label, a.image, std::string(regions::region_type_name(a.report.type)), fixed(s.disagreement, 4),
           fixed(s.coverage, 4), fixed(s.any_correct, 4), fixed(s.silent_wrong, 4)});
    res.regions.emplace_back(a, s);
  }
  for (const auto& p : t.save(fs::path(cfg.out) / "tables" / "audit")) m.artifact(p);
  nlohmann::json summary = {{"clean_disagreement", res.clean_disagreement},
                            {"test_errors", res.test_errors},
                            {"test_error_sum", res.error_sum},
                            {"union_bound_holds", res.clean_disagreement <= res.error_sum}};
  const auto summary_path = fs::path(cfg.out) / "audit.json";
  io::write_text(summary_path, summary.dump(2) + "\n");
  m.artifact(summary_path);
  m.finish();
  return res;
}

// ---------------------------------------------------------------------------
// report

inline void cmd_report(const ExperimentConfig& cfg) {
  auto m = detail::start(cfg, "report");
  const fs::path tables = fs::path(cfg.out) / "tables";
  std::string md = "# Uncertainty region experiment\n\n";
  md += fmt::format("Architecture {}, {} models, config hash {}.\n\n", nn::arch_kind_name(cfg.architecture),
                    cfg.seeds.size(), config_hash(cfg));
  bool any = false;
  for (const char* name : {"baseline", "transfer", "regions", "l2", "audit"}) {
    const auto p = tables / (std::string(name) + ".md");
    if (!fs::exists(p)) continue;
    md += io::read_text(p) + "\n";
    any = true;
  }
  require(any, ErrorCode::kMissingData, "no tables in " + tables.string() + " (run the other stages first)");
  const fs::path regions_index = fs::path(cfg.out) / "regions" / "index.json";
  if (fs::exists(regions_index)) {
    std::map<std::string, int> counts;
    for (const auto& a : load_regions(cfg)) ++counts[std::string(regions::region_type_name(a.report.type))];
    md += "### Region types\n\n";
    for (const auto& [type, n] : counts) md += fmt::format("- {}: {}\n", type, n);
    md += "\n";
    m.note("region_types", counts);
  }
  io::write_text(fs::path(cfg.out) / "report.md", md);
  m.artifact(fs::path(cfg.out) / "report.md");
  m.finish();
}

inline void run_stage(const std::string& stage, const ExperimentConfig& cfg) {
  if (stage == "train") {
    cmd_train(cfg);
  } else if (stage == "attack") {
    cmd_attack(cfg);
  } else if (stage == "regions") {
    cmd_regions(cfg);
  } else if (stage == "audit") {
    cmd_audit(cfg);
  } else if (stage == "report") {
    cmd_report(cfg);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown stage '" + stage + "'");
  }
}

inline void run_all(const ExperimentConfig& cfg) {
  for (const auto& s : kStageOrder) run_stage(s, cfg);
}

}  // namespace advmap::pipeline
