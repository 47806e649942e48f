#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "bdl/errors.hpp"
#include "bdl/harness/checkpoint.hpp"
#include "bdl/harness/config.hpp"
#include "bdl/harness/experiment.hpp"
#include "bdl/harness/files.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerics = 3;
constexpr int kExitOther = 1;

using namespace bdl::harness;

void log_line(const std::string& line) { std::cerr << line << std::endl; }

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  RunOptions opts;
  opts.log = log_line;
  const RunResult r = run_experiment(cfg, opts);
  std::cout << r.report.at("metrics").dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ExperimentConfig cfg = load_config(config_path);
  RunOptions opts;
  opts.log = log_line;
  std::cout << metrics_to_json(evaluate_checkpoint(ckpt, cfg, opts)).dump(2) << "\n";
  return 0;
}

int cmd_grid(const std::string& ckpt_path, const std::string& mode, const std::string& out,
             const std::string& config_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ExperimentConfig cfg = config_path.empty() ? parse_config(ckpt.config) : load_config(config_path);
  render_grid(ckpt, cfg, grid_mode_from_string(mode), out);
  std::cerr << "wrote " << out << std::endl;
  return 0;
}

int cmd_compare(const std::string& clean_path, const std::string& backdoored_path) {
  nlohmann::json clean, backdoored;
  try {
    clean = nlohmann::json::parse(read_file(clean_path));
    backdoored = nlohmann::json::parse(read_file(backdoored_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw bdl::ValidationError(std::string("cannot parse report: ") + e.what());
  }
  std::cout << compare_reports(clean, backdoored).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor attacks on autoencoders and GANs"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out, mode, clean_path, backdoored_path;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "Train and evaluate one experiment");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out, "Override the output directory");

  auto* eval = app.add_subcommand("eval", "Recompute metrics for a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* grid = app.add_subcommand("grid", "Render a sample grid from a checkpoint");
  grid->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  grid->add_option("--mode", mode, "clean or triggered")->required()->check(CLI::IsMember({"clean", "triggered"}));
  grid->add_option("--out", out, "Output PNG")->required();
  grid->add_option("--config", config_path, "Config to use instead of the one stored in the checkpoint");

  auto* compare = app.add_subcommand("compare", "Utility deltas between a clean and a backdoored report");
  compare->add_option("--clean", clean_path, "Clean report.json")->required()->check(CLI::ExistingFile);
  compare->add_option("--backdoored", backdoored_path, "Backdoored report.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*train) return cmd_train(config_path, seed, out);
    if (*eval) return cmd_eval(ckpt_path, config_path);
    if (*grid) return cmd_grid(ckpt_path, mode, out, config_path);
    if (*compare) return cmd_compare(clean_path, backdoored_path);
  } catch (const bdl::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << std::endl;
    return kExitValidation;
  } catch (const bdl::NumericsError& e) {
    std::cerr << "numerics abort: " << e.what() << std::endl;
    return kExitNumerics;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitOther;
  }
  return kExitOther;
}
