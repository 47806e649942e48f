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
#include "bdl/rng.hpp"

namespace bdl {

// Scores are clamped into [kScoreClamp, 1 - kScoreClamp] before any log.
inline constexpr float kScoreClamp = 1e-7f;

// Variance floor below which a probe batch counts as collapsed.
inline constexpr double kCollapseVariance = 1e-6;

struct Generator {
  Mlp net;
  std::size_t noise_dim = 64;
  ImageShape image_shape;
};

// D scores the original distribution; d_bd (backdoored training only) the
// target distribution. The two never share parameters.
struct DiscriminatorPair {
  Mlp d;
  std::optional<Mlp> d_bd;
};

struct GanModel {
  Generator generator;
  DiscriminatorPair discriminators;
};

// Generator d_z -> 256 -> 512 -> pixels, discriminators pixels -> 256 -> 1;
// leaky-ReLU hidden layers, sigmoid outputs.
MlpSpec generator_spec(std::size_t noise_dim, const ImageShape& shape);
MlpSpec discriminator_spec(const ImageShape& shape);

// Scores of a bound discriminator on batch x pixels images in [0, 1]. The
// discriminator reads pixels rescaled to [-1, 1]; with raw [0, 1] inputs the
// specified networks mode-collapse within a few MNIST epochs.
Var discriminator_scores(Graph& g, const BoundMlp& d, Var images);
Tensor discriminator_scores(const Mlp& d, const Tensor& images);

// batch x d_z standard-normal draws.
Tensor sample_noise(std::size_t batch, std::size_t noise_dim, Rng& rng);

// Negated  E[log D(x)] + E[log(1 - D(x_hat))].
Var discriminator_loss(Graph& g, Var real_scores, Var fake_scores);
// Negated  E[log D(x_hat)].
Var generator_loss_clean(Graph& g, Var fake_scores);
// Negated  1/2 E[log D(x_hat)] + 1/2 E[log D_bd(x_hat_bd)].
Var generator_loss_backdoored(Graph& g, Var clean_scores, Var backdoor_scores);

// z: batch x d_z (or a single d_z vector). Returns batch x pixels (or one
// H x W x C image for vector input).
Tensor generate(const Generator& gen, const Tensor& z);

struct GanTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t noise_dim = 64;
  bool backdoor = true;
  NoiseTrigger trigger;
  // DistributionTarget or FixedImageTarget; ignored in clean mode.
  TargetSpec target = InverseTarget{};
  std::uint64_t seed = 0;
  OptimizerSettings generator_optimizer = OptimizerSettings::adam(2e-4, 0.5, 0.999);
  OptimizerSettings discriminator_optimizer = OptimizerSettings::adam(2e-4, 0.5, 0.999);
  std::size_t discriminator_steps = 1;
  std::size_t generator_steps = 1;
  std::size_t probe_batch = 64;
};

struct GanEpochStats {
  std::size_t epoch = 0;
  double mean_d_loss = 0.0;
  std::optional<double> mean_d_bd_loss;
  double mean_g_loss = 0.0;
  double probe_variance = 0.0;
  std::optional<std::string> warning;

  friend bool operator==(const GanEpochStats&, const GanEpochStats&) = default;
};

struct GanTrainResult {
  GanModel model;
  std::vector<GanEpochStats> history;
};

using GanEpochCallback = std::function<void(const GanEpochStats&)>;

void validate(const GanTrainConfig& cfg, const ImageShape& shape);

// One iteration per batch of `original`: update D on real vs G(z), update
// D_bd on target reals vs G(z_bd) (backdoored mode), then update G on fresh
// z and z_bd. Clean mode skips D_bd and uses the single-discriminator loss.
GanTrainResult train_gan(const GanTrainConfig& cfg, const Dataset& original, const GanEpochCallback& on_epoch = {});

}  // namespace bdl
