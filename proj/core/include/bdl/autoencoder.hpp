#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bdl/backdoor.hpp"
#include "bdl/data.hpp"
#include "bdl/graph.hpp"
#include "bdl/layers.hpp"
#include "bdl/optim.hpp"

namespace bdl {

enum class LossKind { kMse, kBce };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// Seed streams derived from the training seed.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kBatchStream = 2;
inline constexpr std::uint64_t kPoisonStream = 3;

struct AutoencoderModel {
  Mlp encoder;
  Mlp decoder;
  ImageShape image_shape;
  LossKind loss = LossKind::kBce;

  std::size_t latent_dim() const { return encoder.output_dim(); }
};

// Dense encoder pixels -> hidden -> latent and mirrored decoder. For 28x28x1
// this is 784 -> 256 -> 64; other shapes scale both widths by pixels / 784.
std::pair<MlpSpec, MlpSpec> autoencoder_specs(const ImageShape& shape);
AutoencoderModel make_autoencoder(const ImageShape& shape, LossKind loss, Rng& rng);

// mse: mean squared difference; bce: mean of -[r log p + (1 - r) log(1 - p)]
// with log inputs clamped.
Var ae_loss(Graph& g, LossKind kind, Var prediction, Var reference);

struct AeTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  // Probability that a batch is trained in backdoor mode.
  double poison_fraction = 0.5;
  ImagePatchTrigger trigger;
  TargetSpec target = InverseTarget{};
  LossKind loss = LossKind::kBce;
  std::uint64_t seed = 0;
  OptimizerSettings optimizer = OptimizerSettings::adam(1e-3);
};

struct AeEpochStats {
  std::size_t epoch = 0;
  double mean_clean_loss = 0.0;
  std::optional<double> mean_poison_loss;
  std::size_t clean_batches = 0;
  std::size_t poison_batches = 0;

  friend bool operator==(const AeEpochStats&, const AeEpochStats&) = default;
};

struct AeTrainResult {
  AutoencoderModel model;
  std::vector<AeEpochStats> history;
};

using AeEpochCallback = std::function<void(const AeEpochStats&)>;

void validate(const AeTrainConfig& cfg, const ImageShape& shape);

// Per batch, a seeded draw decides poisoning: poisoned batches are triggered
// and scored against make_target(x); clean batches against x itself.
AeTrainResult train_autoencoder(const AeTrainConfig& cfg, const Dataset& train, const AeEpochCallback& on_epoch = {});

// x: a single H x W x C image, or batch x pixels. Output has x's shape.
Tensor reconstruct(const AutoencoderModel& model, const Tensor& x);

}  // namespace bdl
