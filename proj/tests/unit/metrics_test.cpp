#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "bdl/errors.hpp"
#include "bdl/metrics.hpp"
#include "oracles.hpp"

namespace bdl {
namespace {

GaussianStats stats(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return GaussianStats{std::move(mean), std::move(cov), 1000}; }

TEST(Frechet, IdenticalIsZero) {
  Rng rng(1);
  const Eigen::MatrixXd s = testing::random_psd(10, 10, rng);
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(10, -1, 1);
  EXPECT_NEAR(frechet_distance(stats(mu, s), stats(mu, s)), 0.0, 1e-8);
}

TEST(Frechet, IdentityCovarianceIsMeanDistance) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
  Eigen::VectorXd v(4);
  v << 1, -2, 0.5, 3;
  EXPECT_NEAR(frechet_distance(stats(Eigen::VectorXd::Zero(4), id), stats(v, id)), v.squaredNorm(), 1e-8);
}

TEST(Frechet, MatchesDiagonalOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(12));
    Eigen::VectorXd ma(d), mb(d), va(d), vb(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      ma(i) = rng.uniform(-2, 2);
      mb(i) = rng.uniform(-2, 2);
      va(i) = rng.uniform(0.01, 3);
      vb(i) = rng.uniform(0.01, 3);
    }
    const double got = frechet_distance(stats(ma, va.asDiagonal()), stats(mb, vb.asDiagonal()));
    EXPECT_NEAR(got, testing::diagonal_frechet(ma, va, mb, vb), 1e-8) << "trial " << trial;
  }
}

TEST(Frechet, Symmetric) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd a = testing::random_psd(8, 8, rng), b = testing::random_psd(8, 3, rng);
    const Eigen::VectorXd ma = Eigen::VectorXd::Random(8), mb = Eigen::VectorXd::Random(8);
    const double ab = frechet_distance(stats(ma, a), stats(mb, b));
    const double ba = frechet_distance(stats(mb, b), stats(ma, a));
    EXPECT_NEAR(ab, ba, 1e-8 * std::max(1.0, ab));
    EXPECT_GE(ab, 0.0);
  }
}

TEST(SqrtPsd, SquaresBack) {
  Rng rng(4);
  for (std::size_t d : {1u, 5u, 16u, 64u}) {
    for (std::size_t rank : {d, std::max<std::size_t>(1, d / 2)}) {
      const Eigen::MatrixXd m = testing::random_psd(d, rank, rng);
      const Eigen::MatrixXd r = sqrt_psd(m);
      EXPECT_LE((r * r - m).norm() / std::max(1.0, m.norm()), 1e-6) << "d=" << d << " rank=" << rank;
      EXPECT_LE((r - r.transpose()).norm(), 1e-9);
    }
  }
}

TEST(GaussianStats, MeanAndUnbiasedCovariance) {
  const Tensor f({3, 2}, {1, 2, 3, 4, 5, 9});
  const GaussianStats s = gaussian_stats_from_features(f);
  EXPECT_NEAR(s.mean(0), 3.0, 1e-12);
  EXPECT_NEAR(s.mean(1), 5.0, 1e-12);
  EXPECT_NEAR(s.cov(0, 0), 4.0, 1e-12);
  EXPECT_NEAR(s.cov(0, 1), 7.0, 1e-12);
  EXPECT_NEAR(s.cov(1, 1), 13.0, 1e-12);
  EXPECT_EQ(s.n, 3u);
}

TEST(GaussianStats, IdenticalRowsHaveZeroCovariance) {
  const Tensor f({5, 3}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.1f, 0.2f, 0.3f, 0.1f, 0.2f, 0.3f, 0.1f, 0.2f, 0.3f, 0.1f, 0.2f, 0.3f});
  EXPECT_NEAR(gaussian_stats_from_features(f).cov.norm(), 0.0, 1e-12);
}

TEST(GaussianStats, NeedsTwoSamples) {
  EXPECT_THROW(gaussian_stats_from_features(Tensor::zeros({1, 3})), SizeError);
}

AutoencoderModel constant_autoencoder(const ImageShape& shape, float value) {
  Rng rng(0);
  AutoencoderModel m = make_autoencoder(shape, LossKind::kMse, rng);
  for (Tensor* p : m.encoder.parameters()) std::fill(p->storage().begin(), p->storage().end(), 0.0f);
  for (Tensor* p : m.decoder.parameters()) std::fill(p->storage().begin(), p->storage().end(), 0.0f);
  // Sigmoid output of a zero pre-activation is 0.5; shift it via the last bias.
  Tensor* last_bias = m.decoder.parameters().back();
  const float logit = std::log(value / (1.0f - value));
  std::fill(last_bias->storage().begin(), last_bias->storage().end(), logit);
  return m;
}

TEST(ReconstructionMse, ConstantModelOnConstantImages) {
  const Dataset zeros("z", Split::kTest, Tensor::zeros({4, 3, 3, 1}));
  EXPECT_NEAR(reconstruction_mse(constant_autoencoder({3, 3, 1}, 0.5f), zeros), 0.25, 1e-6);
  const Dataset ones("o", Split::kTest, Tensor::full({4, 3, 3, 1}, 1.0f));
  EXPECT_NEAR(reconstruction_mse(constant_autoencoder({3, 3, 1}, 0.25f), ones), 0.5625, 1e-6);
}

TEST(ReconstructionMse, OrderInvariant) {
  const Dataset d = synth_blobs(50, 8, 8, 3);
  Rng rng(1);
  const AutoencoderModel m = make_autoencoder({8, 8, 1}, LossKind::kBce, rng);
  std::vector<std::size_t> idx(50);
  std::iota(idx.begin(), idx.end(), 0);
  std::reverse(idx.begin(), idx.end());
  EXPECT_NEAR(reconstruction_mse(m, d), reconstruction_mse(m, d.subset(idx)), 1e-9);
}

TEST(BackdoorErrorAe, ConstantModelAgainstFixedTarget) {
  const Dataset d = synth_blobs(10, 6, 6, 1);
  const AutoencoderModel m = constant_autoencoder({6, 6, 1}, 0.5f);
  const TargetSpec t = FixedImageTarget{Tensor::full({6, 6, 1}, 1.0f)};
  EXPECT_NEAR(backdoor_error_ae(m, d, ImagePatchTrigger{Corner::kTopLeft, 2, {1.0f}}, t), 0.25, 1e-6);
}

TEST(FeatureExtractor, NeedsLabels) {
  const Dataset d("x", Split::kTrain, Tensor::zeros({20, 4, 4, 1}));
  EXPECT_THROW(train_feature_extractor(d, FeatureExtractorConfig{}), ContractError);
}

const FeatureExtractor& synth_extractor() {
  static const FeatureExtractor f = [] {
    FeatureExtractorConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 4;
    const Dataset test = synth_blobs(300, 12, 12, 2);
    return train_feature_extractor(synth_blobs(1500, 12, 12, 1), cfg, &test);
  }();
  return f;
}

TEST(FeatureExtractor, LearnsSynthQuadrants) {
  const FeatureExtractor& f = synth_extractor();
  EXPECT_GE(f.heldout_accuracy, 0.9);
  EXPECT_EQ(f.num_classes, 4u);
  EXPECT_EQ(extract_features(f, synth_blobs(7, 12, 12, 9).gather(std::vector<std::size_t>{0, 1, 2})).shape(),
            (Shape{3, f.feature_dim}));
}

TEST(FeatureExtractor, SameSeedSameParameters) {
  FeatureExtractorConfig cfg;
  cfg.epochs = 1;
  cfg.min_accuracy = 0.0;
  cfg.seed = 6;
  const Dataset train = synth_blobs(300, 8, 8, 1);
  EXPECT_TRUE(train_feature_extractor(train, cfg).net == train_feature_extractor(train, cfg).net);
}

TEST(FeatureExtractor, BelowFloorIsCalibrationError) {
  FeatureExtractorConfig cfg;
  cfg.epochs = 1;
  cfg.min_accuracy = 1.01;
  EXPECT_THROW(train_feature_extractor(synth_blobs(200, 8, 8, 1), cfg), CalibrationError);
}

TEST(LabelFraction, CountsPredictedLabels) {
  const FeatureExtractor& f = synth_extractor();
  const Dataset d = synth_blobs(200, 12, 12, 31);
  const Dataset zeros = filter_by_labels(d, {0});
  EXPECT_GE(label_fraction(f, zeros.images().reshaped({zeros.count(), 144}), {0}), 0.9);
  EXPECT_NEAR(label_fraction(f, d.images().reshaped({200, 144}), {0, 1, 2, 3}), 1.0, 1e-12);
}

TEST(GanMetrics, SmallSampleWarnsAboutRank) {
  const FeatureExtractor& f = synth_extractor();
  Rng rng(2);
  const ImageShape shape{12, 12, 1};
  Generator gen{Mlp(generator_spec(16, shape), rng), 16, shape};
  const Dataset test = synth_blobs(100, 12, 12, 8);
  GanEvalInputs in;
  in.backdoored = &gen;
  in.features = &f;
  in.original_test = &test;
  in.target = DistributionTarget{std::make_shared<const Dataset>(filter_by_labels(test, {1}))};
  in.target_labels = {1};
  in.n_samples = 32;
  in.seed = 1;
  const MetricsReport r = gan_utility_and_backdoor(in);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.front().find("rank"), std::string::npos);
  EXPECT_TRUE(r.backdoored_utility.has_value());
  EXPECT_TRUE(r.backdoor_error.has_value());
  EXPECT_EQ(r.kind, MetricKind::kProxyFid);
}

TEST(GanMetrics, InverseTargetIsContractError) {
  const FeatureExtractor& f = synth_extractor();
  Rng rng(2);
  Generator gen{Mlp(generator_spec(16, {12, 12, 1}), rng), 16, {12, 12, 1}};
  const Dataset test = synth_blobs(100, 12, 12, 8);
  GanEvalInputs in;
  in.backdoored = &gen;
  in.features = &f;
  in.original_test = &test;
  in.n_samples = 64;
  EXPECT_THROW(gan_utility_and_backdoor(in), ContractError);
}

TEST(GanMetrics, UtilityMatchesCombinedReport) {
  const FeatureExtractor& f = synth_extractor();
  Rng rng(3);
  Generator gen{Mlp(generator_spec(16, {12, 12, 1}), rng), 16, {12, 12, 1}};
  const Dataset test = synth_blobs(200, 12, 12, 8);
  GanEvalInputs in;
  in.backdoored = &gen;
  in.features = &f;
  in.original_test = &test;
  in.target = FixedImageTarget{test.image_tensor(0)};
  in.n_samples = 128;
  in.seed = 11;
  const MetricsReport r = gan_utility_and_backdoor(in);
  EXPECT_DOUBLE_EQ(*r.backdoored_utility, gan_utility(gen, f, test, 128, 11));
  EXPECT_EQ(r.backdoor_error_kind, MetricKind::kMse);
}

TEST(Report, NegativeValuesRejected) {
  MetricsReport r;
  r.backdoor_error = -0.1;
  EXPECT_THROW(check_report(r), NumericsError);
  r.backdoor_error = 0.1;
  EXPECT_NO_THROW(check_report(r));
}

}  // namespace
}  // namespace bdl
