#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdl/autoencoder.hpp"
#include "bdl/backdoor.hpp"
#include "bdl/data.hpp"
#include "bdl/gan.hpp"
#include "bdl/metrics.hpp"

namespace bdl::harness {

enum class ExperimentKind { kAeClean, kAeBackdoor, kGanClean, kGanBackdoor };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
bool is_gan(ExperimentKind kind);
bool is_backdoor(ExperimentKind kind);

// Environment variable naming the dataset root used to resolve relative IDX
// paths.
inline constexpr const char* kDataEnvVar = "BACKDOOR_LAB_DATA";

struct DatasetConfig {
  std::string kind = "idx";  // "idx" or "synth_blobs"
  // idx: paths are resolved as given, then under $BACKDOOR_LAB_DATA.
  std::string train_images = "train-images-idx3-ubyte";
  std::string train_labels = "train-labels-idx1-ubyte";
  std::string test_images = "t10k-images-idx3-ubyte";
  std::string test_labels = "t10k-labels-idx1-ubyte";
  // Optional caps on the number of images used (first n).
  std::optional<std::size_t> train_limit;
  std::optional<std::size_t> test_limit;
  // synth_blobs
  std::size_t count = 2000;
  std::size_t test_count = 500;
  std::size_t height = 16;
  std::size_t width = 16;
  std::uint64_t synth_seed = 1;
};

struct TriggerConfig {
  std::string kind = "image_patch";  // or "noise_component"
  Corner corner = Corner::kTopLeft;
  std::size_t size = 5;
  std::vector<float> color = {1.0f};
  std::optional<std::size_t> index;  // nullopt = last
  float value = -100.0f;
};

struct TargetConfig {
  std::string kind = "inverse";  // "fixed_image", "inverse" or "distribution"
  // fixed_image: image `index` of the "train" or "test" split.
  std::string source = "train";
  std::size_t index = 0;
  // distribution: labels kept from the original dataset.
  std::set<int> labels;
};

struct TrainingConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double poison_fraction = 0.5;
  LossKind loss = LossKind::kBce;
  double learning_rate = 1e-3;  // autoencoder Adam
  std::size_t noise_dim = 64;
  double gan_learning_rate = 2e-4;
  double gan_beta1 = 0.5;
  double gan_beta2 = 0.999;
  std::size_t discriminator_steps = 1;
  std::size_t generator_steps = 1;
};

struct EvalConfig {
  std::size_t n_samples = 2048;
  std::size_t feature_epochs = 3;
  double feature_min_accuracy = 0.90;
  std::size_t grid_cols = 8;
  std::size_t grid_rows = 4;  // GAN grids
  // ae_backdoor: also train a clean model with the same seed for the
  // utility delta.
  bool clean_baseline = false;
  // gan_backdoor with a distribution target: also train a clean GAN on the
  // target distribution as the backdoor-error reference.
  bool target_baseline = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kAeBackdoor;
  DatasetConfig dataset;
  TriggerConfig trigger;
  TargetConfig target;
  TrainingConfig training;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
};

// Parses a config document; a missing seed or unknown field value raises
// ValidationError.
ExperimentConfig parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// Kind-consistency checks (trigger and target kinds, ranges). Throws
// ValidationError.
void validate(const ExperimentConfig& cfg);

std::filesystem::path resolve_data_path(const std::string& path);

struct ExperimentData {
  Dataset train;
  Dataset test;
};

ExperimentData load_datasets(const DatasetConfig& cfg);

TriggerSpec build_trigger(const TriggerConfig& cfg);
// Distribution targets filter `data`; fixed images are taken from it.
TargetSpec build_target(const TargetConfig& cfg, const ExperimentData& data, bool test_split = false);

AeTrainConfig ae_train_config(const ExperimentConfig& cfg, const ExperimentData& data);
GanTrainConfig gan_train_config(const ExperimentConfig& cfg, const ExperimentData& data);

}  // namespace bdl::harness
