#include <cstdio>
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bdl/errors.hpp"
#include "bdl/gan.hpp"
#include "bdl/metrics.hpp"

namespace bdl {
namespace {

// Frozen from a synthetic pilot (measured: proxy-FID 265 against 941 for an
// untrained generator; triggered fraction 1.0).
constexpr double kSynthFidCeiling = 400.0;
constexpr double kSynthTriggeredFloor = 0.9;

TEST(SampleNoise, StandardNormalMoments) {
  Rng rng(123);
  const Tensor z = sample_noise(1000, 100, rng);
  ASSERT_EQ(z.shape(), (Shape{1000, 100}));
  double s = 0, s2 = 0;
  for (float v : z.data()) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(z.size());
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.05);
}

double scalar(Graph& g, Var v) { return g.value(v).item(); }

TEST(GanLoss, DiscriminatorAtHalfIsTwoLogTwo) {
  Graph g;
  const Var real = g.constant(Tensor::full({8, 1}, 0.5f));
  const Var fake = g.constant(Tensor::full({8, 1}, 0.5f));
  EXPECT_NEAR(scalar(g, discriminator_loss(g, real, fake)), 2.0 * std::log(2.0), 1e-6);
}

TEST(GanLoss, GeneratorAtHalfIsLogTwo) {
  Graph g;
  EXPECT_NEAR(scalar(g, generator_loss_clean(g, g.constant(Tensor::full({8, 1}, 0.5f)))), std::log(2.0), 1e-6);
}

TEST(GanLoss, DiscriminatorClosedForm) {
  Graph g;
  const Var real = g.constant(Tensor({2, 1}, {0.9f, 0.6f}));
  const Var fake = g.constant(Tensor({2, 1}, {0.2f, 0.3f}));
  const double expected = -((std::log(0.9) + std::log(0.6)) / 2 + (std::log(0.8) + std::log(0.7)) / 2);
  EXPECT_NEAR(scalar(g, discriminator_loss(g, real, fake)), expected, 1e-6);
}

TEST(GanLoss, SaturatedScoresStayFinite) {
  Graph g;
  const Var real = g.constant(Tensor({1, 1}, {0.0f}));
  const Var fake = g.constant(Tensor({1, 1}, {1.0f}));
  EXPECT_TRUE(std::isfinite(scalar(g, discriminator_loss(g, real, fake))));
  EXPECT_TRUE(std::isfinite(scalar(g, generator_loss_clean(g, real))));
}

// When both discriminators give the same scores the two-branch objective
// reduces to the single-discriminator one.
TEST(GanLoss, BackdooredObjectiveDegeneratesToClean) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> s(16);
    for (auto& x : s) x = static_cast<float>(rng.uniform(0.01, 0.99));
    Graph g;
    const Var scores = g.constant(Tensor({16, 1}, s));
    const double clean = scalar(g, generator_loss_clean(g, scores));
    const double bd = scalar(g, generator_loss_backdoored(g, scores, scores));
    EXPECT_NEAR(bd, clean, 1e-6);
  }
}

// The backdoored generator gradient is the average of the gradients of the
// two single-branch objectives.
TEST(GanLoss, GradientFlowsThroughBothBranches) {
  Rng rng(17);
  Mlp gen_net(MlpSpec{4, {{6, Activation::kLeakyRelu}, {9, Activation::kSigmoid}}}, rng);
  const Mlp d(MlpSpec{9, {{5, Activation::kLeakyRelu}, {1, Activation::kSigmoid}}}, rng);
  const Mlp d_bd(MlpSpec{9, {{5, Activation::kLeakyRelu}, {1, Activation::kSigmoid}}}, rng);
  const Tensor z = sample_noise(7, 4, rng);
  const Tensor z_bd = apply_noise_trigger(sample_noise(7, 4, rng), NoiseTrigger{});

  auto grads = [&](int mode) {
    Graph g;
    const BoundMlp gb = gen_net.bind(g, true);
    const BoundMlp db = d.bind(g);
    const BoundMlp dbb = d_bd.bind(g);
    const Var clean = Mlp::forward(g, db, Mlp::forward(g, gb, g.borrow(z)));
    const Var bd = Mlp::forward(g, dbb, Mlp::forward(g, gb, g.borrow(z_bd)));
    Var loss;
    if (mode == 0) loss = generator_loss_backdoored(g, clean, bd);
    if (mode == 1) loss = generator_loss_clean(g, clean);
    if (mode == 2) loss = generator_loss_clean(g, bd);
    g.backward(loss);
    std::vector<float> out;
    for (Tensor* p : gen_net.parameters()) {
      out.insert(out.end(), p->grad().begin(), p->grad().end());
      p->clear_grad();
    }
    return out;
  };
  const auto both = grads(0), only_clean = grads(1), only_bd = grads(2);
  ASSERT_EQ(both.size(), only_clean.size());
  double bd_norm = 0;
  for (std::size_t i = 0; i < both.size(); ++i) {
    EXPECT_NEAR(both[i], 0.5 * (only_clean[i] + only_bd[i]), 1e-6);
    bd_norm += std::abs(only_bd[i]);
  }
  EXPECT_GT(bd_norm, 0.0);
}

// Toy generator x = sigmoid(w z + b) with two parameters; scorers are fixed
// one-weight logistic units. The objective is re-evaluated in double and
// differentiated by central differences.
TEST(GanLoss, TwoParameterGeneratorMatchesFiniteDifferences) {
  Rng rng(23);
  Mlp gen(MlpSpec{1, {{1, Activation::kSigmoid}}}, rng);
  Mlp d(MlpSpec{1, {{1, Activation::kSigmoid}}}, rng);
  Mlp d_bd(MlpSpec{1, {{1, Activation::kSigmoid}}}, rng);
  d.load_flat(std::vector<float>{1.7f, -0.4f});
  d_bd.load_flat(std::vector<float>{-2.3f, 0.9f});
  const Tensor z({5, 1}, {0.3f, -1.2f, 0.8f, 2.0f, -0.5f});
  const Tensor z_bd = apply_noise_trigger(z, NoiseTrigger{0, -3.0f});

  Graph g;
  const BoundMlp gb = gen.bind(g, true);
  const Var clean = Mlp::forward(g, d.bind(g), Mlp::forward(g, gb, g.borrow(z)));
  const Var bd = Mlp::forward(g, d_bd.bind(g), Mlp::forward(g, gb, g.borrow(z_bd)));
  g.backward(generator_loss_backdoored(g, clean, bd));
  const auto params = gen.parameters();
  const double engine_w = params[0]->grad()[0], engine_b = params[1]->grad()[0];

  const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const auto objective = [&](double w, double b) {
    double lc = 0, lb = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      lc += std::log(sig(1.7 * sig(w * z[i] + b) - 0.4));
      lb += std::log(sig(-2.3 * sig(w * z_bd[i] + b) + 0.9));
    }
    return -(0.5 * lc / 5 + 0.5 * lb / 5);
  };
  const double w0 = (*params[0])[0], b0 = (*params[1])[0], h = 1e-6;
  const double fd_w = (objective(w0 + h, b0) - objective(w0 - h, b0)) / (2 * h);
  const double fd_b = (objective(w0, b0 + h) - objective(w0, b0 - h)) / (2 * h);
  EXPECT_NEAR(engine_w, fd_w, 1e-4 * std::max(1.0, std::abs(fd_w)));
  EXPECT_NEAR(engine_b, fd_b, 1e-4 * std::max(1.0, std::abs(fd_b)));
  EXPECT_GT(std::abs(fd_w), 1e-3);
}

TEST(Gan, DiscriminatorReadsRescaledPixels) {
  Rng rng(2);
  const Mlp d(discriminator_spec(ImageShape{3, 3, 1}), rng);
  const Tensor x({2, 9}, {0, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 1.0f, 1, 1, 1, 0, 0, 0, 0.5f, 0.5f, 0.5f});
  Tensor rescaled = x;
  for (auto& v : rescaled.storage()) v = 2.0f * v - 1.0f;
  const Tensor scores = discriminator_scores(d, x);
  const Tensor expected = d.infer(rescaled);
  ASSERT_EQ(scores.shape(), (Shape{2, 1}));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_FLOAT_EQ(scores[i], expected[i]);
}

TEST(Gan, GenerateShapes) {
  Rng rng(1);
  Generator gen{Mlp(generator_spec(8, ImageShape{4, 4, 1}), rng), 8, ImageShape{4, 4, 1}};
  EXPECT_EQ(generate(gen, Tensor::zeros({5, 8})).shape(), (Shape{5, 16}));
  EXPECT_EQ(generate(gen, Tensor::zeros({8})).shape(), (Shape{4, 4, 1}));
  EXPECT_THROW(generate(gen, Tensor::zeros({5, 7})), DimensionError);
}

TEST(Gan, ArchitectureSpecs) {
  const MlpSpec g = generator_spec(64, ImageShape{28, 28, 1});
  ASSERT_EQ(g.layers.size(), 3u);
  EXPECT_EQ(g.layers[0].out, 256u);
  EXPECT_EQ(g.layers[1].out, 512u);
  EXPECT_EQ(g.out(), 784u);
  const MlpSpec d = discriminator_spec(ImageShape{28, 28, 1});
  EXPECT_EQ(d.in, 784u);
  EXPECT_EQ(d.out(), 1u);
}

GanTrainConfig small_config(const Dataset& target_data, bool backdoor) {
  GanTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.noise_dim = 16;
  cfg.backdoor = backdoor;
  cfg.target = DistributionTarget{std::make_shared<const Dataset>(target_data)};
  cfg.seed = 7;
  return cfg;
}

TEST(Gan, DiscriminatorsShareNothing) {
  const Dataset train = synth_blobs(128, 8, 8, 1);
  GanTrainResult r = train_gan(small_config(filter_by_labels(train, {0}), true), train);
  ASSERT_TRUE(r.model.discriminators.d_bd.has_value());
  std::set<const Tensor*> d_params;
  for (const Tensor* p : r.model.discriminators.d.parameters()) d_params.insert(p);
  for (const Tensor* p : r.model.discriminators.d_bd->parameters()) EXPECT_EQ(d_params.count(p), 0u);
  EXPECT_FALSE(r.model.discriminators.d == *r.model.discriminators.d_bd);
  for (const auto& e : r.history) EXPECT_TRUE(e.mean_d_bd_loss.has_value());
}

TEST(Gan, CleanModeHasNoBackdoorDiscriminator) {
  const Dataset train = synth_blobs(128, 8, 8, 1);
  const GanTrainResult r = train_gan(small_config(train, false), train);
  EXPECT_FALSE(r.model.discriminators.d_bd.has_value());
  for (const auto& e : r.history) EXPECT_FALSE(e.mean_d_bd_loss.has_value());
}

TEST(Gan, SameSeedSameGenerator) {
  const Dataset train = synth_blobs(128, 8, 8, 1);
  const auto cfg = small_config(filter_by_labels(train, {1, 2}), true);
  const GanTrainResult a = train_gan(cfg, train);
  const GanTrainResult b = train_gan(cfg, train);
  EXPECT_TRUE(a.model.generator.net == b.model.generator.net);
  EXPECT_EQ(a.history, b.history);
}

TEST(Gan, ValidationRejectsBadTargets) {
  const ImageShape shape{8, 8, 1};
  GanTrainConfig cfg;
  cfg.noise_dim = 16;
  cfg.target = InverseTarget{};
  EXPECT_ANY_THROW(validate(cfg, shape));
  cfg.target = FixedImageTarget{Tensor::zeros({8, 8, 1})};
  cfg.trigger = NoiseTrigger{16, -100.0f};
  EXPECT_THROW(validate(cfg, shape), ValidationError);
  cfg.trigger = NoiseTrigger{};
  EXPECT_NO_THROW(validate(cfg, shape));
}

struct SynthGanRun {
  FeatureExtractor features;
  GanTrainResult bd;
  Dataset test;
};

const SynthGanRun& synth_run() {
  static const SynthGanRun run = [] {
    const Dataset train = synth_blobs(2000, 16, 16, 21);
    Dataset test = synth_blobs(500, 16, 16, 22);
    FeatureExtractorConfig fc;
    fc.epochs = 5;
    fc.seed = 1;
    FeatureExtractor f = train_feature_extractor(train, fc, &test);
    GanTrainConfig cfg;
    cfg.epochs = 5;
    cfg.noise_dim = 32;
    cfg.target = DistributionTarget{std::make_shared<const Dataset>(filter_by_labels(train, {0}))};
    cfg.seed = 3;
    return SynthGanRun{std::move(f), train_gan(cfg, train), std::move(test)};
  }();
  return run;
}

TEST(GanPilot, TriggeredOutputsDifferFromClean) {
  const auto& run = synth_run();
  Rng rng(99);
  const Tensor z = sample_noise(64, 32, rng);
  const Tensor clean = generate(run.bd.model.generator, z);
  const Tensor trig = generate(run.bd.model.generator, apply_noise_trigger(z, NoiseTrigger{}));
  float linf = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) linf = std::max(linf, std::abs(clean[i] - trig[i]));
  EXPECT_GT(linf, 0.05f);
}

TEST(GanPilot, SynthUtilityAndTargetFraction) {
  const auto& run = synth_run();
  const double fid = gan_utility(run.bd.model.generator, run.features, run.test, 512, 5);
  Rng ur(3);
  const Generator untrained{Mlp(generator_spec(32, ImageShape{16, 16, 1}), ur), 32, ImageShape{16, 16, 1}};
  EXPECT_LT(fid, 0.5 * gan_utility(untrained, run.features, run.test, 512, 5));
  EXPECT_LT(fid, kSynthFidCeiling);
  Rng rng(4);
  const Tensor trig = generate(run.bd.model.generator, apply_noise_trigger(sample_noise(512, 32, rng), NoiseTrigger{}));
  EXPECT_GT(label_fraction(run.features, trig, {0}), kSynthTriggeredFloor);
}

}  // namespace
}  // namespace bdl
