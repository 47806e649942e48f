#include <gtest/gtest.h>

#include <cmath>

#include "bdl/autoencoder.hpp"
#include "bdl/errors.hpp"
#include "bdl/metrics.hpp"
#include "oracles.hpp"

namespace bdl {
namespace {

double loss_value(LossKind kind, const Tensor& p, const Tensor& r) {
  Graph g;
  return g.value(ae_loss(g, kind, g.constant(p), g.constant(r))).item();
}

TEST(AeLoss, MseClosedForm) {
  const Tensor p({2, 2}, {0.0f, 1.0f, 0.5f, 0.25f});
  const Tensor r({2, 2}, {1.0f, 1.0f, 0.0f, 0.25f});
  EXPECT_NEAR(loss_value(LossKind::kMse, p, r), (1.0 + 0.0 + 0.25 + 0.0) / 4.0, 1e-7);
}

TEST(AeLoss, BceAtHalfIsLogTwo) {
  const Tensor p = Tensor::full({3, 5}, 0.5f);
  Rng rng(2);
  std::vector<float> rv(15);
  for (auto& x : rv) x = static_cast<float>(rng.uniform());
  EXPECT_NEAR(loss_value(LossKind::kBce, p, Tensor({3, 5}, rv)), std::log(2.0), 1e-6);
}

TEST(AeLoss, BceClosedForm) {
  const Tensor p({1, 2}, {0.9f, 0.2f});
  const Tensor r({1, 2}, {1.0f, 0.5f});
  const double expected = (-std::log(0.9) - (0.5 * std::log(0.2) + 0.5 * std::log(0.8))) / 2.0;
  EXPECT_NEAR(loss_value(LossKind::kBce, p, r), expected, 1e-6);
}

TEST(AeLoss, BceSaturatedStaysFinite) {
  const Tensor p({1, 2}, {0.0f, 1.0f});
  const Tensor r({1, 2}, {1.0f, 0.0f});
  EXPECT_TRUE(std::isfinite(loss_value(LossKind::kBce, p, r)));
}

TEST(Autoencoder, SpecsForMnist) {
  const auto [enc, dec] = autoencoder_specs(ImageShape{28, 28, 1});
  EXPECT_EQ(enc.in, 784u);
  ASSERT_EQ(enc.layers.size(), 2u);
  EXPECT_EQ(enc.layers[0].out, 256u);
  EXPECT_EQ(enc.layers[1].out, 64u);
  EXPECT_EQ(dec.in, 64u);
  EXPECT_EQ(dec.out(), 784u);
  EXPECT_EQ(dec.layers.back().activation, Activation::kSigmoid);
}

TEST(Autoencoder, ReconstructKeepsShape) {
  Rng rng(1);
  const AutoencoderModel m = make_autoencoder(ImageShape{8, 8, 1}, LossKind::kBce, rng);
  EXPECT_EQ(reconstruct(m, Tensor::zeros({8, 8, 1})).shape(), (Shape{8, 8, 1}));
  EXPECT_EQ(reconstruct(m, Tensor::zeros({3, 64})).shape(), (Shape{3, 64}));
}

// With p = 0 the training loop must coincide with plain autoencoder training.
TEST(Autoencoder, CleanTrainingMatchesHandWrittenLoop) {
  const Dataset train = synth_blobs(300, 12, 12, 5);
  AeTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.poison_fraction = 0.0;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 3, {1.0f}};
  cfg.seed = 42;
  const AeTrainResult r = train_autoencoder(cfg, train);
  const AutoencoderModel ref = testing::train_clean_autoencoder_by_hand(3, 32, LossKind::kBce, 42, train);
  EXPECT_TRUE(r.model.encoder == ref.encoder);
  EXPECT_TRUE(r.model.decoder == ref.decoder);
  for (const auto& e : r.history) {
    EXPECT_EQ(e.poison_batches, 0u);
    EXPECT_FALSE(e.mean_poison_loss.has_value());
  }
}

TEST(Autoencoder, AlwaysPoisonedLossDecreases) {
  const Dataset train = synth_blobs(500, 16, 16, 3);
  AeTrainConfig cfg;
  cfg.epochs = 5;
  cfg.poison_fraction = 1.0;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 3, {1.0f}};
  cfg.target = FixedImageTarget{train.image_tensor(0)};
  cfg.seed = 9;
  const AeTrainResult r = train_autoencoder(cfg, train);
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) {
    ASSERT_TRUE(r.history[e].mean_poison_loss.has_value());
    EXPECT_LT(*r.history[e].mean_poison_loss, *r.history[e - 1].mean_poison_loss) << "epoch " << e;
    EXPECT_EQ(r.history[e].clean_batches, 0u);
  }
}

TEST(Autoencoder, SameSeedSameModel) {
  const Dataset train = synth_blobs(200, 10, 10, 1);
  AeTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 2, {1.0f}};
  cfg.seed = 3;
  const AeTrainResult a = train_autoencoder(cfg, train);
  const AeTrainResult b = train_autoencoder(cfg, train);
  EXPECT_TRUE(a.model.encoder == b.model.encoder);
  EXPECT_TRUE(a.model.decoder == b.model.decoder);
  EXPECT_EQ(a.history, b.history);
  cfg.seed = 4;
  EXPECT_FALSE(train_autoencoder(cfg, train).model.decoder == a.model.decoder);
}

TEST(Autoencoder, PoisonDrawRoughlyMatchesFraction) {
  const Dataset train = synth_blobs(640, 8, 8, 1);
  AeTrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.poison_fraction = 0.3;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 2, {1.0f}};
  cfg.seed = 8;
  std::size_t poison = 0, total = 0;
  for (const auto& e : train_autoencoder(cfg, train).history) {
    poison += e.poison_batches;
    total += e.poison_batches + e.clean_batches;
  }
  EXPECT_EQ(total, 400u);
  // Binomial(400, 0.3): sd ~ 9.2 batches.
  EXPECT_NEAR(static_cast<double>(poison) / static_cast<double>(total), 0.3, 0.07);
}

TEST(Autoencoder, ValidationRejectsBadSettings) {
  const ImageShape shape{8, 8, 1};
  AeTrainConfig cfg;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 2, {1.0f}};
  cfg.poison_fraction = 1.5;
  EXPECT_ANY_THROW(validate(cfg, shape));
  cfg.poison_fraction = 0.5;
  cfg.trigger.size = 9;
  EXPECT_THROW(validate(cfg, shape), SizeError);
  cfg.trigger.size = 2;
  cfg.target = DistributionTarget{std::make_shared<const Dataset>(synth_blobs(4, 8, 8, 1))};
  EXPECT_ANY_THROW(validate(cfg, shape));
}

// Synthetic-data pilot: thresholds were fixed from measured runs with
// margin (see README).
TEST(AutoencoderPilot, CleanSynthReconstructs) {
  const Dataset train = synth_blobs(1000, 16, 16, 11);
  const Dataset test = synth_blobs(200, 16, 16, 12);
  AeTrainConfig cfg;
  cfg.epochs = 30;
  cfg.poison_fraction = 0.0;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 3, {1.0f}};
  cfg.seed = 1;
  const AutoencoderModel m = train_autoencoder(cfg, train).model;
  EXPECT_LT(reconstruction_mse(m, test), 0.02);
}

TEST(AutoencoderPilot, FixedTargetBackdoorOnSynth) {
  const Dataset train = synth_blobs(1000, 16, 16, 11);
  const Dataset test = synth_blobs(200, 16, 16, 12);
  AeTrainConfig cfg;
  cfg.epochs = 30;
  cfg.poison_fraction = 0.0;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 3, {1.0f}};
  cfg.target = FixedImageTarget{train.image_tensor(0)};
  cfg.seed = 1;
  const AutoencoderModel clean = train_autoencoder(cfg, train).model;
  const double untrained_err = backdoor_error_ae(clean, test, cfg.trigger, cfg.target);
  cfg.poison_fraction = 0.5;
  const AutoencoderModel bd = train_autoencoder(cfg, train).model;
  const double clean_mse = reconstruction_mse(clean, test);
  EXPECT_LT(backdoor_error_ae(bd, test, cfg.trigger, cfg.target), 0.005);
  EXPECT_GT(untrained_err, 0.02);
  EXPECT_LT(reconstruction_mse(bd, test), 2.0 * clean_mse);
}

TEST(AutoencoderPilot, InverseTargetNeedsTraining) {
  const Dataset train = synth_blobs(300, 16, 16, 11);
  const Dataset test = synth_blobs(100, 16, 16, 12);
  AeTrainConfig cfg;
  cfg.epochs = 5;
  cfg.poison_fraction = 0.0;
  cfg.trigger = ImagePatchTrigger{Corner::kTopLeft, 3, {1.0f}};
  cfg.seed = 2;
  const AutoencoderModel clean = train_autoencoder(cfg, train).model;
  EXPECT_GT(backdoor_error_ae(clean, test, cfg.trigger, InverseTarget{}), 0.05);
}

}  // namespace
}  // namespace bdl
