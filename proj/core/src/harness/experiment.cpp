#include "bdl/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "bdl/errors.hpp"
#include "bdl/harness/files.hpp"
#include "bdl/harness/grid.hpp"

namespace bdl::harness {

using nlohmann::json;

namespace {

constexpr std::uint64_t kFeatureStream = 21;
constexpr std::uint64_t kEvalStream = 22;
constexpr std::uint64_t kGridStream = 23;

void say(const RunOptions& opts, const std::string& line) {
  if (opts.log) opts.log(line);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json ae_history_json(const std::vector<AeEpochStats>& h) {
  json out = json::array();
  for (const auto& s : h) {
    out.push_back({{"epoch", s.epoch},
                   {"clean_loss", s.clean_batches ? json(s.mean_clean_loss) : json(nullptr)},
                   {"poison_loss", opt_json(s.mean_poison_loss)},
                   {"clean_batches", s.clean_batches},
                   {"poison_batches", s.poison_batches}});
  }
  return out;
}

json gan_history_json(const std::vector<GanEpochStats>& h) {
  json out = json::array();
  for (const auto& s : h) {
    out.push_back({{"epoch", s.epoch},
                   {"d_loss", s.mean_d_loss},
                   {"d_bd_loss", opt_json(s.mean_d_bd_loss)},
                   {"g_loss", s.mean_g_loss},
                   {"probe_variance", s.probe_variance},
                   {"warning", s.warning ? json(*s.warning) : json(nullptr)}});
  }
  return out;
}

// Shape checks against the loaded data happen after config validation; their
// failures are still configuration errors.
template <typename F>
void as_validation(F&& check) {
  try {
    check();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
}

std::filesystem::path out_dir(const ExperimentConfig& cfg) { return std::filesystem::path(cfg.output_dir); }

void write_partial(const ExperimentConfig& cfg, const RunOptions& opts, const std::string& stage, const json& history,
                   const std::string& error) {
  if (!opts.write_files) return;
  json doc{{"experiment", to_string(cfg.kind)}, {"stage", stage}, {"error", error}, {"history", history}};
  try {
    write_file_atomic(out_dir(cfg) / "history.partial.json", doc.dump(2) + "\n");
  } catch (const Error&) {
    // The training error is the one worth reporting.
  }
}

AutoencoderModel train_ae_logged(const AeTrainConfig& tc, const Dataset& train, const ExperimentConfig& cfg,
                                 const RunOptions& opts, const std::string& stage, json& history_out) {
  std::vector<AeEpochStats> history;
  try {
    auto r = train_autoencoder(tc, train, [&](const AeEpochStats& s) {
      history.push_back(s);
      std::string line = stage + " epoch " + std::to_string(s.epoch + 1) + "/" + std::to_string(tc.epochs);
      if (s.clean_batches) line += " clean_loss " + fmt(s.mean_clean_loss);
      if (s.mean_poison_loss) line += " poison_loss " + fmt(*s.mean_poison_loss);
      say(opts, line);
    });
    history_out = ae_history_json(r.history);
    return std::move(r.model);
  } catch (const Error& e) {
    write_partial(cfg, opts, stage, ae_history_json(history), e.what());
    throw;
  }
}

Generator train_gan_logged(const GanTrainConfig& tc, const Dataset& original, const ExperimentConfig& cfg,
                           const RunOptions& opts, const std::string& stage, json& history_out,
                           std::vector<std::string>& warnings, GanModel* full = nullptr) {
  std::vector<GanEpochStats> history;
  try {
    auto r = train_gan(tc, original, [&](const GanEpochStats& s) {
      history.push_back(s);
      std::string line = stage + " epoch " + std::to_string(s.epoch + 1) + "/" + std::to_string(tc.epochs) +
                         " d_loss " + fmt(s.mean_d_loss);
      if (s.mean_d_bd_loss) line += " d_bd_loss " + fmt(*s.mean_d_bd_loss);
      line += " g_loss " + fmt(s.mean_g_loss) + " probe_var " + fmt(s.probe_variance);
      if (s.warning) line += " WARNING " + *s.warning;
      say(opts, line);
    });
    for (const auto& s : r.history) {
      if (s.warning) warnings.push_back(stage + " epoch " + std::to_string(s.epoch + 1) + ": " + *s.warning);
    }
    history_out = gan_history_json(r.history);
    if (full) *full = r.model;
    return std::move(r.model.generator);
  } catch (const Error& e) {
    write_partial(cfg, opts, stage, gan_history_json(history), e.what());
    throw;
  }
}

FeatureExtractor feature_extractor_for(const ExperimentConfig& cfg, const ExperimentData& data, const RunOptions& opts) {
  FeatureExtractorConfig fc;
  fc.epochs = cfg.eval.feature_epochs;
  fc.min_accuracy = cfg.eval.feature_min_accuracy;
  fc.seed = derive_seed(cfg.seed, kFeatureStream);
  say(opts, "training feature extractor (" + std::to_string(fc.epochs) + " epochs)");
  auto f = train_feature_extractor(data.train, fc, &data.test);
  say(opts, "feature extractor held-out accuracy " + fmt(f.heldout_accuracy));
  return f;
}

MetricsReport evaluate_ae(const AutoencoderModel& model, const ExperimentConfig& cfg, const ExperimentData& data,
                          std::optional<double> clean_utility) {
  MetricsReport r;
  r.kind = MetricKind::kMse;
  r.backdoor_error_kind = MetricKind::kMse;
  r.seed = cfg.seed;
  r.real_samples = data.test.count();
  const double mse = reconstruction_mse(model, data.test);
  if (cfg.kind == ExperimentKind::kAeBackdoor) {
    r.backdoored_utility = mse;
    r.clean_utility = clean_utility;
    const auto trigger = std::get<ImagePatchTrigger>(build_trigger(cfg.trigger));
    r.backdoor_error = backdoor_error_ae(model, data.test, trigger, build_target(cfg.target, data));
  } else {
    r.clean_utility = mse;
  }
  check_report(r);
  return r;
}

struct GanBaselines {
  const Generator* clean = nullptr;
  const Generator* target_clean = nullptr;
};

MetricsReport evaluate_gan(const Generator& gen, const ExperimentConfig& cfg, const ExperimentData& data,
                           const FeatureExtractor& f, const GanBaselines& baselines) {
  const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);
  if (cfg.kind == ExperimentKind::kGanClean) {
    MetricsReport r;
    r.kind = MetricKind::kProxyFid;
    r.seed = eval_seed;
    r.real_samples = r.generated_samples = cfg.eval.n_samples;
    r.clean_utility = gan_utility(gen, f, data.test, cfg.eval.n_samples, eval_seed);
    if (cfg.eval.n_samples < f.feature_dim + 1) {
      r.warnings.push_back("n_samples " + std::to_string(cfg.eval.n_samples) + " < feature_dim + 1 = " +
                           std::to_string(f.feature_dim + 1) + ": covariance is rank-deficient");
    }
    check_report(r);
    return r;
  }
  GanEvalInputs in;
  in.backdoored = &gen;
  in.clean = baselines.clean;
  in.target_clean = baselines.target_clean;
  in.features = &f;
  in.original_test = &data.test;
  in.target = build_target(cfg.target, data, true);
  if (cfg.target.kind == "distribution") in.target_labels = cfg.target.labels;
  in.trigger = std::get<NoiseTrigger>(build_trigger(cfg.trigger));
  in.n_samples = cfg.eval.n_samples;
  in.seed = eval_seed;
  return gan_utility_and_backdoor(in);
}

std::vector<Tensor> ae_grid_rows(const AutoencoderModel& model, const ExperimentConfig& cfg, const Dataset& test,
                                 GridMode mode) {
  const std::size_t cols = std::min(cfg.eval.grid_cols, test.count());
  std::vector<std::size_t> idx(cols);
  for (std::size_t i = 0; i < cols; ++i) idx[i] = i;
  Tensor x = test.gather(idx);
  const ImageShape shape = test.image_shape();
  if (mode == GridMode::kTriggered) {
    const auto trigger = build_trigger(cfg.trigger);
    const auto* patch = std::get_if<ImagePatchTrigger>(&trigger);
    if (!patch) throw ValidationError("autoencoder grids need an image_patch trigger");
    apply_image_trigger_rows(x, shape, *patch);
  }
  const Tensor y = reconstruct(model, x);
  std::vector<Tensor> tiles = unbatch(x, shape.as_shape());
  for (auto& t : unbatch(y, shape.as_shape())) tiles.push_back(std::move(t));
  return tiles;
}

void render_grid_with(const Model& model, const ExperimentConfig& cfg, GridMode mode, const std::filesystem::path& path,
                      const ExperimentData* data) {
  if (const auto* ae = std::get_if<AutoencoderModel>(&model)) {
    auto tiles = ae_grid_rows(*ae, cfg, data->test, mode);
    emit_grid(tiles, 2, tiles.size() / 2, path);
    return;
  }
  const auto& gen = std::get<GanModel>(model).generator;
  const std::size_t n = cfg.eval.grid_rows * cfg.eval.grid_cols;
  Rng rng(derive_seed(cfg.seed, kGridStream));
  Tensor z = sample_noise(n, gen.noise_dim, rng);
  if (mode == GridMode::kTriggered) {
    const auto trigger = build_trigger(cfg.trigger);
    const auto* noise = std::get_if<NoiseTrigger>(&trigger);
    if (!noise) throw ValidationError("GAN grids need a noise_component trigger");
    z = apply_noise_trigger(z, *noise);
  }
  emit_grid(unbatch(generate(gen, z), gen.image_shape.as_shape()), cfg.eval.grid_rows, cfg.eval.grid_cols, path);
}

// AE: one four-row grid (original, decoded, triggered, backdoored output).
// GAN: clean-noise grid, plus a triggered-noise grid for backdoored runs.
std::vector<std::string> emit_grids(const Model& model, const ExperimentConfig& cfg, const ExperimentData& data) {
  const auto dir = out_dir(cfg);
  if (const auto* ae = std::get_if<AutoencoderModel>(&model)) {
    auto tiles = ae_grid_rows(*ae, cfg, data.test, GridMode::kClean);
    const std::size_t cols = tiles.size() / 2;
    for (auto& t : ae_grid_rows(*ae, cfg, data.test, GridMode::kTriggered)) tiles.push_back(std::move(t));
    emit_grid(tiles, 4, cols, dir / "grid.png");
    return {"grid.png"};
  }
  std::vector<std::string> files{"grid_clean.png"};
  render_grid_with(model, cfg, GridMode::kClean, dir / "grid_clean.png", &data);
  if (cfg.kind == ExperimentKind::kGanBackdoor) {
    render_grid_with(model, cfg, GridMode::kTriggered, dir / "grid_triggered.png", &data);
    files.push_back("grid_triggered.png");
  }
  return files;
}

json report_json(const ExperimentConfig& cfg, const MetricsReport& m, const json& history, const json& extra) {
  json rep;
  rep["report_version"] = kReportVersion;
  rep["experiment"] = to_string(cfg.kind);
  rep["seed"] = cfg.seed;
  rep["config"] = to_json(cfg);
  rep["metrics"] = metrics_to_json(m);
  json deltas = json::object();
  if (m.clean_utility && m.backdoored_utility) {
    deltas["utility_abs"] = *m.backdoored_utility - *m.clean_utility;
    deltas["utility_rel"] = *m.clean_utility > 0.0 ? json((*m.backdoored_utility - *m.clean_utility) / *m.clean_utility)
                                                   : json(nullptr);
  }
  if (m.backdoor_error && m.backdoor_baseline) {
    deltas["backdoor_abs"] = *m.backdoor_error - *m.backdoor_baseline;
  }
  rep["deltas"] = deltas;
  rep["history"] = history;
  for (auto it = extra.begin(); it != extra.end(); ++it) rep[it.key()] = it.value();
  return rep;
}

}  // namespace

GridMode grid_mode_from_string(const std::string& name) {
  if (name == "clean") return GridMode::kClean;
  if (name == "triggered") return GridMode::kTriggered;
  throw ValidationError("grid mode must be clean or triggered, got '" + name + "'");
}

json metrics_to_json(const MetricsReport& r) {
  return {{"kind", to_string(r.kind)},
          {"backdoor_error_kind", to_string(r.backdoor_error_kind)},
          {"clean_utility", opt_json(r.clean_utility)},
          {"backdoored_utility", opt_json(r.backdoored_utility)},
          {"backdoor_error", opt_json(r.backdoor_error)},
          {"backdoor_baseline", opt_json(r.backdoor_baseline)},
          {"target_fraction_triggered", opt_json(r.target_fraction_triggered)},
          {"target_fraction_clean", opt_json(r.target_fraction_clean)},
          {"real_samples", r.real_samples},
          {"generated_samples", r.generated_samples},
          {"seed", r.seed},
          {"warnings", r.warnings}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  try {
    r.kind = metric_kind_from_string(j.at("kind").get<std::string>());
    r.backdoor_error_kind = metric_kind_from_string(j.value("backdoor_error_kind", to_string(r.kind)));
    r.clean_utility = opt_from(j, "clean_utility");
    r.backdoored_utility = opt_from(j, "backdoored_utility");
    r.backdoor_error = opt_from(j, "backdoor_error");
    r.backdoor_baseline = opt_from(j, "backdoor_baseline");
    r.target_fraction_triggered = opt_from(j, "target_fraction_triggered");
    r.target_fraction_clean = opt_from(j, "target_fraction_clean");
    r.real_samples = j.value("real_samples", std::size_t{0});
    r.generated_samples = j.value("generated_samples", std::size_t{0});
    r.seed = j.value("seed", std::uint64_t{0});
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed metrics: ") + e.what());
  }
  return r;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  say(opts, "loading " + cfg.dataset.kind + " data");
  const ExperimentData data = load_datasets(cfg.dataset);
  say(opts, "train " + std::to_string(data.train.count()) + " images, test " + std::to_string(data.test.count()));

  RunResult result;
  json history = json::object();
  json extra = json::object();

  if (!is_gan(cfg.kind)) {
    const AeTrainConfig tc = ae_train_config(cfg, data);
    as_validation([&] { validate(tc, data.train.image_shape()); });
    json h;
    AutoencoderModel model = train_ae_logged(tc, data.train, cfg, opts, "train", h);
    history["model"] = h;
    std::optional<double> clean_utility;
    if (cfg.kind == ExperimentKind::kAeBackdoor && cfg.eval.clean_baseline) {
      AeTrainConfig clean_tc = tc;
      clean_tc.poison_fraction = 0.0;
      json hc;
      const AutoencoderModel clean = train_ae_logged(clean_tc, data.train, cfg, opts, "clean_baseline", hc);
      history["clean_baseline"] = hc;
      clean_utility = reconstruction_mse(clean, data.test);
    }
    result.metrics = evaluate_ae(model, cfg, data, clean_utility);
    result.checkpoint.model = std::move(model);
  } else {
    const GanTrainConfig tc = gan_train_config(cfg, data);
    as_validation([&] { validate(tc, data.train.image_shape()); });
    const FeatureExtractor f = feature_extractor_for(cfg, data, opts);
    extra["feature_extractor"] = {{"heldout_accuracy", f.heldout_accuracy}, {"feature_dim", f.feature_dim}};
    std::vector<std::string> warnings;
    json h;
    GanModel model;
    const Generator gen = train_gan_logged(tc, data.train, cfg, opts, "train", h, warnings, &model);
    history["model"] = h;

    std::optional<Generator> clean, target_clean;
    if (cfg.kind == ExperimentKind::kGanBackdoor && cfg.eval.clean_baseline) {
      GanTrainConfig ctc = tc;
      ctc.backdoor = false;
      json hc;
      clean = train_gan_logged(ctc, data.train, cfg, opts, "clean_baseline", hc, warnings);
      history["clean_baseline"] = hc;
    }
    if (cfg.kind == ExperimentKind::kGanBackdoor && cfg.eval.target_baseline) {
      if (cfg.target.kind != "distribution") throw ValidationError("eval.target_baseline needs a distribution target");
      GanTrainConfig ttc = tc;
      ttc.backdoor = false;
      const auto target = std::get<DistributionTarget>(build_target(cfg.target, data));
      json ht;
      target_clean = train_gan_logged(ttc, *target.dataset, cfg, opts, "target_baseline", ht, warnings);
      history["target_baseline"] = ht;
    }
    say(opts, "evaluating on " + std::to_string(cfg.eval.n_samples) + " samples");
    result.metrics = evaluate_gan(gen, cfg, data, f,
                                  {clean ? &*clean : nullptr, target_clean ? &*target_clean : nullptr});
    for (auto& w : warnings) result.metrics.warnings.push_back(std::move(w));
    result.checkpoint.model = std::move(model);
  }

  result.checkpoint.config = to_json(cfg);
  result.checkpoint.metrics = metrics_to_json(result.metrics);
  json files = {{"checkpoint", "checkpoint.bdl"}, {"report", "report.json"}, {"timing", "timing.json"}};
  if (opts.write_files) files["grids"] = emit_grids(result.checkpoint.model, cfg, data);
  extra["files"] = files;
  result.report = report_json(cfg, result.metrics, history, extra);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (opts.write_files) {
    const auto dir = out_dir(cfg);
    save_checkpoint(dir / "checkpoint.bdl", result.checkpoint);
    write_file_atomic(dir / "report.json", result.report.dump(2) + "\n");
    const json timing{{"experiment", to_string(cfg.kind)}, {"wall_seconds", result.wall_seconds}};
    write_file_atomic(dir / "timing.json", timing.dump(2) + "\n");
  }
  say(opts, "done in " + fmt(result.wall_seconds) + " s");
  return result;
}

MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  const ExperimentData data = load_datasets(cfg.dataset);
  if (const auto* ae = std::get_if<AutoencoderModel>(&ckpt.model)) {
    if (is_gan(cfg.kind)) throw ValidationError("checkpoint holds an autoencoder but the config is " + to_string(cfg.kind));
    if (ae->image_shape != data.test.image_shape()) {
      throw DimensionError("checkpoint image shape " + to_string(ae->image_shape) + " does not match the dataset's " +
                           to_string(data.test.image_shape()));
    }
    return evaluate_ae(*ae, cfg, data, std::nullopt);
  }
  if (!is_gan(cfg.kind)) throw ValidationError("checkpoint holds a GAN but the config is " + to_string(cfg.kind));
  const auto& gan = std::get<GanModel>(ckpt.model);
  if (gan.generator.image_shape != data.test.image_shape()) {
    throw DimensionError("checkpoint image shape " + to_string(gan.generator.image_shape) +
                         " does not match the dataset's " + to_string(data.test.image_shape()));
  }
  const FeatureExtractor f = feature_extractor_for(cfg, data, opts);
  return evaluate_gan(gan.generator, cfg, data, f, {});
}

void render_grid(const Checkpoint& ckpt, const ExperimentConfig& cfg, GridMode mode, const std::filesystem::path& path) {
  std::optional<ExperimentData> data;
  if (std::holds_alternative<AutoencoderModel>(ckpt.model)) data = load_datasets(cfg.dataset);
  render_grid_with(ckpt.model, cfg, mode, path, data ? &*data : nullptr);
}

json compare_reports(const json& clean, const json& backdoored) {
  const MetricsReport c = metrics_from_json(clean.at("metrics"));
  const MetricsReport b = metrics_from_json(backdoored.at("metrics"));
  if (c.kind != b.kind) {
    throw ValidationError("reports use different metrics: " + to_string(c.kind) + " vs " + to_string(b.kind));
  }
  // A clean run reports its own utility as clean_utility; a backdoored run
  // as backdoored_utility.
  const auto cu = c.clean_utility ? c.clean_utility : c.backdoored_utility;
  const auto bu = b.backdoored_utility ? b.backdoored_utility : b.clean_utility;
  if (!cu || !bu) throw ValidationError("both reports need a utility value");
  json out{{"metric_kind", to_string(c.kind)},
           {"clean_utility", *cu},
           {"backdoored_utility", *bu},
           {"utility_abs", *bu - *cu},
           {"utility_rel", *cu > 0.0 ? json((*bu - *cu) / *cu) : json(nullptr)},
           {"backdoor_error", opt_json(b.backdoor_error)},
           {"clean_seed", clean.value("seed", std::uint64_t{0})},
           {"backdoored_seed", backdoored.value("seed", std::uint64_t{0})}};
  return out;
}

}  // namespace bdl::harness
