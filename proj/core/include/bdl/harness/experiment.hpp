#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "bdl/harness/checkpoint.hpp"
#include "bdl/harness/config.hpp"
#include "bdl/metrics.hpp"

namespace bdl::harness {

inline constexpr int kReportVersion = 1;

struct RunOptions {
  std::function<void(const std::string&)> log;
  bool write_files = true;
};

struct RunResult {
  MetricsReport metrics;
  // Contents of report.json. Deterministic for a given config; wall-clock
  // times go to timing.json instead.
  nlohmann::json report;
  Checkpoint checkpoint;
  double wall_seconds = 0.0;
};

// Validates, trains per kind, evaluates, and (with write_files) writes
// checkpoint.bdl, report.json, timing.json and PNG grids under
// cfg.output_dir. A training abort writes history.partial.json and rethrows.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Recomputes metrics for a saved model. GAN evaluation retrains the feature
// extractor from the config's seed.
MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const ExperimentConfig& cfg, const RunOptions& opts = {});

enum class GridMode { kClean, kTriggered };
GridMode grid_mode_from_string(const std::string& name);

// AE: clean mode shows originals over reconstructions, triggered mode shows
// triggered inputs over backdoored outputs. GAN: generations on clean or
// triggered noise.
void render_grid(const Checkpoint& ckpt, const ExperimentConfig& cfg, GridMode mode, const std::filesystem::path& path);

nlohmann::json metrics_to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);

// Utility deltas of a backdoored report against a clean one.
nlohmann::json compare_reports(const nlohmann::json& clean, const nlohmann::json& backdoored);

}  // namespace bdl::harness
