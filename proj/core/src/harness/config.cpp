#include "bdl/harness/config.hpp"

#include <cstdlib>
#include <fstream>

#include "bdl/errors.hpp"

namespace bdl::harness {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
}

// Rejects keys outside `allowed`, so typos do not silently fall back to
// defaults.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v, where);
  out = v;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kAeClean: return "ae_clean";
    case ExperimentKind::kAeBackdoor: return "ae_backdoor";
    case ExperimentKind::kGanClean: return "gan_clean";
    case ExperimentKind::kGanBackdoor: return "gan_backdoor";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "ae_clean") return ExperimentKind::kAeClean;
  if (name == "ae_backdoor") return ExperimentKind::kAeBackdoor;
  if (name == "gan_clean") return ExperimentKind::kGanClean;
  if (name == "gan_backdoor") return ExperimentKind::kGanBackdoor;
  throw ValidationError("unknown experiment kind '" + name + "'");
}

bool is_gan(ExperimentKind kind) { return kind == ExperimentKind::kGanClean || kind == ExperimentKind::kGanBackdoor; }

bool is_backdoor(ExperimentKind kind) {
  return kind == ExperimentKind::kAeBackdoor || kind == ExperimentKind::kGanBackdoor;
}

ExperimentConfig parse_config(const json& doc) {
  require_object(doc, "config");
  check_keys(doc, "config", {"experiment", "seed", "output_dir", "dataset", "trigger", "target", "training", "eval"});
  ExperimentConfig cfg;

  if (!doc.contains("experiment")) throw ValidationError("config.experiment is required");
  cfg.kind = experiment_kind_from_string(doc.at("experiment").get<std::string>());
  if (!doc.contains("seed") || doc.at("seed").is_null()) throw ValidationError("config.seed is required");
  read(doc, "seed", cfg.seed, "config");
  read(doc, "output_dir", cfg.output_dir, "config");

  // Kind-dependent trigger defaults: GANs use the noise trigger.
  if (is_gan(cfg.kind)) {
    cfg.trigger.kind = "noise_component";
    cfg.target.kind = "distribution";
  }

  if (doc.contains("dataset")) {
    const auto& d = doc.at("dataset");
    require_object(d, "dataset");
    check_keys(d, "dataset", {"kind", "train_images", "train_labels", "test_images", "test_labels", "train_limit",
                              "test_limit", "count", "test_count", "height", "width", "seed"});
    auto& ds = cfg.dataset;
    read(d, "kind", ds.kind, "dataset");
    read(d, "train_images", ds.train_images, "dataset");
    read(d, "train_labels", ds.train_labels, "dataset");
    read(d, "test_images", ds.test_images, "dataset");
    read(d, "test_labels", ds.test_labels, "dataset");
    read_opt(d, "train_limit", ds.train_limit, "dataset");
    read_opt(d, "test_limit", ds.test_limit, "dataset");
    read(d, "count", ds.count, "dataset");
    read(d, "test_count", ds.test_count, "dataset");
    read(d, "height", ds.height, "dataset");
    read(d, "width", ds.width, "dataset");
    read(d, "seed", ds.synth_seed, "dataset");
  }

  if (doc.contains("trigger")) {
    const auto& t = doc.at("trigger");
    require_object(t, "trigger");
    check_keys(t, "trigger", {"kind", "corner", "size", "color", "index", "value"});
    auto& tc = cfg.trigger;
    read(t, "kind", tc.kind, "trigger");
    if (t.contains("corner")) tc.corner = corner_from_string(t.at("corner").get<std::string>());
    read(t, "size", tc.size, "trigger");
    read(t, "color", tc.color, "trigger");
    if (t.contains("index")) {
      const auto& idx = t.at("index");
      if (idx.is_string()) {
        if (idx.get<std::string>() != "last") throw ValidationError("trigger.index must be an integer or \"last\"");
        tc.index.reset();
      } else {
        std::size_t v = 0;
        read(t, "index", v, "trigger");
        tc.index = v;
      }
    }
    read(t, "value", tc.value, "trigger");
  }

  if (doc.contains("target")) {
    const auto& t = doc.at("target");
    require_object(t, "target");
    check_keys(t, "target", {"kind", "source", "index", "labels"});
    auto& tc = cfg.target;
    read(t, "kind", tc.kind, "target");
    read(t, "source", tc.source, "target");
    read(t, "index", tc.index, "target");
    read(t, "labels", tc.labels, "target");
  }

  if (doc.contains("training")) {
    const auto& t = doc.at("training");
    require_object(t, "training");
    check_keys(t, "training", {"epochs", "batch_size", "poison_fraction", "loss", "learning_rate", "noise_dim",
                               "gan_learning_rate", "gan_beta1", "gan_beta2", "discriminator_steps", "generator_steps"});
    auto& tc = cfg.training;
    read(t, "epochs", tc.epochs, "training");
    read(t, "batch_size", tc.batch_size, "training");
    read(t, "poison_fraction", tc.poison_fraction, "training");
    if (t.contains("loss")) tc.loss = loss_kind_from_string(t.at("loss").get<std::string>());
    read(t, "learning_rate", tc.learning_rate, "training");
    read(t, "noise_dim", tc.noise_dim, "training");
    read(t, "gan_learning_rate", tc.gan_learning_rate, "training");
    read(t, "gan_beta1", tc.gan_beta1, "training");
    read(t, "gan_beta2", tc.gan_beta2, "training");
    read(t, "discriminator_steps", tc.discriminator_steps, "training");
    read(t, "generator_steps", tc.generator_steps, "training");
  }

  if (doc.contains("eval")) {
    const auto& e = doc.at("eval");
    require_object(e, "eval");
    check_keys(e, "eval", {"n_samples", "feature_epochs", "feature_min_accuracy", "grid_cols", "grid_rows",
                           "clean_baseline", "target_baseline"});
    auto& ec = cfg.eval;
    read(e, "n_samples", ec.n_samples, "eval");
    read(e, "feature_epochs", ec.feature_epochs, "eval");
    read(e, "feature_min_accuracy", ec.feature_min_accuracy, "eval");
    read(e, "grid_cols", ec.grid_cols, "eval");
    read(e, "grid_rows", ec.grid_rows, "eval");
    read(e, "clean_baseline", ec.clean_baseline, "eval");
    read(e, "target_baseline", ec.target_baseline, "eval");
  }
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.kind);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;

  const auto& ds = cfg.dataset;
  json d{{"kind", ds.kind}};
  if (ds.kind == "idx") {
    d["train_images"] = ds.train_images;
    d["train_labels"] = ds.train_labels;
    d["test_images"] = ds.test_images;
    d["test_labels"] = ds.test_labels;
    d["train_limit"] = ds.train_limit ? json(*ds.train_limit) : json(nullptr);
    d["test_limit"] = ds.test_limit ? json(*ds.test_limit) : json(nullptr);
  } else {
    d["count"] = ds.count;
    d["test_count"] = ds.test_count;
    d["height"] = ds.height;
    d["width"] = ds.width;
    d["seed"] = ds.synth_seed;
  }
  j["dataset"] = d;

  const auto& tc = cfg.trigger;
  if (tc.kind == "image_patch") {
    j["trigger"] = {{"kind", tc.kind}, {"corner", to_string(tc.corner)}, {"size", tc.size}, {"color", tc.color}};
  } else {
    j["trigger"] = {{"kind", tc.kind}, {"index", tc.index ? json(*tc.index) : json("last")}, {"value", tc.value}};
  }

  const auto& tg = cfg.target;
  json t{{"kind", tg.kind}};
  if (tg.kind == "fixed_image") {
    t["source"] = tg.source;
    t["index"] = tg.index;
  } else if (tg.kind == "distribution") {
    t["labels"] = tg.labels;
  }
  j["target"] = t;

  const auto& tr = cfg.training;
  j["training"] = {{"epochs", tr.epochs},
                   {"batch_size", tr.batch_size},
                   {"poison_fraction", tr.poison_fraction},
                   {"loss", to_string(tr.loss)},
                   {"learning_rate", tr.learning_rate},
                   {"noise_dim", tr.noise_dim},
                   {"gan_learning_rate", tr.gan_learning_rate},
                   {"gan_beta1", tr.gan_beta1},
                   {"gan_beta2", tr.gan_beta2},
                   {"discriminator_steps", tr.discriminator_steps},
                   {"generator_steps", tr.generator_steps}};

  const auto& ev = cfg.eval;
  j["eval"] = {{"n_samples", ev.n_samples},
               {"feature_epochs", ev.feature_epochs},
               {"feature_min_accuracy", ev.feature_min_accuracy},
               {"grid_cols", ev.grid_cols},
               {"grid_rows", ev.grid_rows},
               {"clean_baseline", ev.clean_baseline},
               {"target_baseline", ev.target_baseline}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

void validate(const ExperimentConfig& cfg) {
  const auto& tr = cfg.training;
  if (tr.epochs < 1) throw ValidationError("training.epochs must be at least 1");
  if (tr.batch_size < 1) throw ValidationError("training.batch_size must be at least 1");
  if (cfg.dataset.kind != "idx" && cfg.dataset.kind != "synth_blobs") {
    throw ValidationError("dataset.kind must be idx or synth_blobs");
  }
  if (cfg.eval.grid_cols < 1 || cfg.eval.grid_rows < 1) throw ValidationError("grid dimensions must be positive");
  if (cfg.eval.n_samples < 2) throw ValidationError("eval.n_samples must be at least 2");
  if (cfg.trigger.kind != "image_patch" && cfg.trigger.kind != "noise_component") {
    throw ValidationError("trigger.kind must be image_patch or noise_component");
  }
  if (cfg.target.kind != "fixed_image" && cfg.target.kind != "inverse" && cfg.target.kind != "distribution") {
    throw ValidationError("target.kind must be fixed_image, inverse or distribution");
  }
  if (cfg.target.kind == "fixed_image" && cfg.target.source != "train" && cfg.target.source != "test") {
    throw ValidationError("target.source must be train or test");
  }

  if (is_gan(cfg.kind)) {
    if (tr.noise_dim < 1) throw ValidationError("training.noise_dim must be positive");
    if (cfg.kind == ExperimentKind::kGanBackdoor) {
      if (cfg.trigger.kind != "noise_component") {
        throw ValidationError("gan_backdoor needs a noise_component trigger, got " + cfg.trigger.kind);
      }
      if (cfg.trigger.index && *cfg.trigger.index >= tr.noise_dim) {
        throw ValidationError("trigger.index " + std::to_string(*cfg.trigger.index) + " out of range for noise_dim " +
                              std::to_string(tr.noise_dim));
      }
      if (cfg.target.kind == "inverse") throw ValidationError("gan_backdoor targets must be distribution or fixed_image");
      if (cfg.target.kind == "distribution" && cfg.target.labels.empty()) {
        throw ValidationError("distribution target needs a non-empty label set");
      }
    }
  } else {
    if (cfg.kind == ExperimentKind::kAeBackdoor) {
      if (cfg.trigger.kind != "image_patch") {
        throw ValidationError("ae_backdoor needs an image_patch trigger, got " + cfg.trigger.kind);
      }
      if (cfg.trigger.size < 1) throw ValidationError("trigger.size must be at least 1");
      if (cfg.target.kind == "distribution") throw ValidationError("ae_backdoor targets must be fixed_image or inverse");
      if (!(tr.poison_fraction >= 0.0 && tr.poison_fraction <= 1.0)) {
        throw ValidationError("training.poison_fraction must lie in [0, 1]");
      }
    }
  }
}

std::filesystem::path resolve_data_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || std::filesystem::exists(p)) return p;
  if (const char* root = std::getenv(kDataEnvVar); root && *root) return std::filesystem::path(root) / p;
  return p;
}

ExperimentData load_datasets(const DatasetConfig& cfg) {
  if (cfg.kind == "synth_blobs") {
    auto all = synth_blobs(cfg.count + cfg.test_count, cfg.height, cfg.width, cfg.synth_seed);
    std::vector<std::size_t> a(cfg.count), b(cfg.test_count);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = i;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = cfg.count + i;
    Dataset train = all.subset(a);
    Dataset test_raw = all.subset(b);
    Dataset test("synth_blobs", Split::kTest, test_raw.images(), test_raw.labels());
    return {std::move(train), std::move(test)};
  }
  if (cfg.kind != "idx") throw ValidationError("unknown dataset kind '" + cfg.kind + "'");
  auto opt_path = [](const std::string& s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return resolve_data_path(s);
  };
  Dataset train = load_idx(resolve_data_path(cfg.train_images), opt_path(cfg.train_labels), Split::kTrain, "mnist");
  Dataset test = load_idx(resolve_data_path(cfg.test_images), opt_path(cfg.test_labels), Split::kTest, "mnist");
  if (cfg.train_limit) train = train.head(*cfg.train_limit);
  if (cfg.test_limit) test = test.head(*cfg.test_limit);
  return {std::move(train), std::move(test)};
}

TriggerSpec build_trigger(const TriggerConfig& cfg) {
  if (cfg.kind == "image_patch") return ImagePatchTrigger{cfg.corner, cfg.size, cfg.color};
  if (cfg.kind == "noise_component") return NoiseTrigger{cfg.index, cfg.value};
  throw ValidationError("unknown trigger kind '" + cfg.kind + "'");
}

TargetSpec build_target(const TargetConfig& cfg, const ExperimentData& data, bool test_split) {
  if (cfg.kind == "inverse") return InverseTarget{};
  if (cfg.kind == "fixed_image") {
    const Dataset& src = cfg.source == "test" ? data.test : data.train;
    if (cfg.index >= src.count()) {
      throw ValidationError("target.index " + std::to_string(cfg.index) + " out of range for " + cfg.source +
                            " split of " + std::to_string(src.count()));
    }
    return FixedImageTarget{src.image_tensor(cfg.index)};
  }
  if (cfg.kind == "distribution") {
    const Dataset& src = test_split ? data.test : data.train;
    if (!src.has_labels()) throw ValidationError("distribution target needs a labeled dataset");
    try {
      return DistributionTarget{std::make_shared<const Dataset>(filter_by_labels(src, cfg.labels))};
    } catch (const DegenerateDatasetError& e) {
      throw ValidationError(e.what());
    }
  }
  throw ValidationError("unknown target kind '" + cfg.kind + "'");
}

AeTrainConfig ae_train_config(const ExperimentConfig& cfg, const ExperimentData& data) {
  AeTrainConfig out;
  out.epochs = cfg.training.epochs;
  out.batch_size = cfg.training.batch_size;
  out.loss = cfg.training.loss;
  out.seed = cfg.seed;
  out.optimizer = OptimizerSettings::adam(cfg.training.learning_rate);
  if (cfg.kind == ExperimentKind::kAeBackdoor) {
    out.poison_fraction = cfg.training.poison_fraction;
    out.trigger = std::get<ImagePatchTrigger>(build_trigger(cfg.trigger));
    out.target = build_target(cfg.target, data);
  } else {
    out.poison_fraction = 0.0;
  }
  return out;
}

GanTrainConfig gan_train_config(const ExperimentConfig& cfg, const ExperimentData& data) {
  GanTrainConfig out;
  out.epochs = cfg.training.epochs;
  out.batch_size = cfg.training.batch_size;
  out.noise_dim = cfg.training.noise_dim;
  out.seed = cfg.seed;
  out.backdoor = cfg.kind == ExperimentKind::kGanBackdoor;
  const auto adam = OptimizerSettings::adam(cfg.training.gan_learning_rate, cfg.training.gan_beta1, cfg.training.gan_beta2);
  out.generator_optimizer = adam;
  out.discriminator_optimizer = adam;
  out.discriminator_steps = cfg.training.discriminator_steps;
  out.generator_steps = cfg.training.generator_steps;
  if (out.backdoor) {
    out.trigger = std::get<NoiseTrigger>(build_trigger(cfg.trigger));
    out.target = build_target(cfg.target, data);
  }
  return out;
}

}  // namespace bdl::harness
