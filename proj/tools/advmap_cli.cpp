// advmap: train a seed-varied ensemble, attack it, map uncertainty regions.
//
//   advmap <train|attack|regions|audit|report|run> --config FILE
//          [--out DIR] [--seed-override N] [--jobs N]
//
// On failure a single-line JSON error record goes to stderr (and to
// <out>/error.json when the output directory is known).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "advmap/core/allocator.hpp"
#include "advmap/core/binary_io.hpp"
#include "advmap/pipeline/stages.hpp"

namespace {

int exit_code(advmap::ErrorCode code) {
  using advmap::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return 2;
    case ErrorCode::kMissingData: return 3;
    case ErrorCode::kBadMagic:
    case ErrorCode::kCountMismatch:
    case ErrorCode::kTruncated:
    case ErrorCode::kFormat: return 4;
    case ErrorCode::kIo: return 5;
    case ErrorCode::kDivergence: return 6;
    case ErrorCode::kShapeMismatch: return 7;
  }
  return 1;
}

int report_error(const std::string& command, const std::string& code, const std::string& message, int status,
                 const std::optional<std::filesystem::path>& out) {
  const nlohmann::json record = {
      {"status", "error"}, {"command", command}, {"code", code}, {"message", message}, {"exit_code", status}};
  std::cerr << record.dump() << "\n";
  if (out && std::filesystem::is_directory(*out)) {
    try {
      advmap::io::write_text(*out / "error.json", record.dump(2) + "\n");
    } catch (...) {
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  advmap::tune_allocator();
  CLI::App app{"Ensemble uncertainty-region experiments on MNIST"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, out_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> jobs;
  app.add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_override, "Output directory (overrides the config)");
  app.add_option("--seed-override", seed_override, "Master seed for attacks and region sampling");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  for (const char* name : {"train", "attack", "regions", "audit", "report"}) app.add_subcommand(name, "");
  app.get_subcommand("train")->description("Train the ensemble and write the baseline error table");
  app.get_subcommand("attack")->description("Generate adversarial sets against M1 and the transfer table");
  app.get_subcommand("regions")->description("Build, sample and evaluate hyper-rectangles");
  app.get_subcommand("audit")->description("Measure ensemble disagreement on clean and region inputs");
  app.get_subcommand("report")->description("Collect every table into report.md");
  app.add_subcommand("run", "Run all stages in order");

  std::string command = "advmap";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(command, "usage", e.what(), 64, std::nullopt);
  }
  command = app.get_subcommands().front()->get_name();

  std::optional<std::filesystem::path> out;
  try {
    auto cfg = advmap::pipeline::load_config(config_path);
    if (!out_override.empty()) cfg.out = out_override;
    if (seed_override) cfg.seed = *seed_override;
    if (jobs) cfg.jobs = *jobs;
    out = cfg.out;
    std::filesystem::create_directories(*out);
    std::filesystem::remove(*out / "error.json");
    if (command == "run") {
      advmap::pipeline::run_all(cfg);
    } else {
      advmap::pipeline::run_stage(command, cfg);
    }
  } catch (const advmap::Error& e) {
    return report_error(command, std::string(advmap::error_code_name(e.code())), e.what(), exit_code(e.code()), out);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(command, "io", e.what(), 5, out);
  } catch (const std::exception& e) {
    return report_error(command, "internal", e.what(), 1, out);
  }
  return 0;
}
