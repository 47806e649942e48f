#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bdl/autoencoder.hpp"
#include "bdl/backdoor.hpp"
#include "bdl/data.hpp"
#include "bdl/gan.hpp"
#include "bdl/layers.hpp"

namespace bdl {

// ---------------------------------------------------------------------------
// Autoencoder metrics

// Mean over images of the per-image mean squared reconstruction error.
double reconstruction_mse(const AutoencoderModel& model, const Dataset& test);

// Triggers every test image, reconstructs it, and scores the result against
// make_target(original) with the same per-image MSE average.
double backdoor_error_ae(const AutoencoderModel& model, const Dataset& test, const ImagePatchTrigger& trigger,
                         const TargetSpec& target);

// ---------------------------------------------------------------------------
// Feature extractor for the proxy Frechet distance

struct FeatureExtractorConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 128;
  std::size_t hidden = 256;
  std::size_t feature_dim = 64;
  double learning_rate = 1e-3;
  double min_accuracy = 0.90;
  std::uint64_t seed = 0;
};

// Classifier pixels -> hidden -> feature_dim -> classes; the feature layer is
// the penultimate (ReLU) activation.
struct FeatureExtractor {
  Mlp net;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  ImageShape image_shape;
  std::string dataset;
  std::uint64_t seed = 0;
  double heldout_accuracy = 0.0;
};

// Trains on `train`; accuracy is measured on `heldout`, or on the last 10%
// of `train` (excluded from training) when no held-out set is given. Throws
// CalibrationError below cfg.min_accuracy.
FeatureExtractor train_feature_extractor(const Dataset& train, const FeatureExtractorConfig& cfg,
                                         const Dataset* heldout = nullptr);

// rows: n x pixels. Returns n x feature_dim.
Tensor extract_features(const FeatureExtractor& f, const Tensor& rows);
std::vector<int> classify(const FeatureExtractor& f, const Tensor& rows);
double classification_accuracy(const FeatureExtractor& f, const Dataset& d);
// Fraction of rows the classifier assigns to a label in `labels`.
double label_fraction(const FeatureExtractor& f, const Tensor& rows, const std::set<int>& labels);

// ---------------------------------------------------------------------------
// Gaussian statistics and the Frechet distance

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  // Fewer than dim + 1 samples cannot give a full-rank covariance.
  bool rank_deficient() const { return n < dim() + 1; }
};

// Sample mean and unbiased covariance of the rows of `features` (n x d),
// symmetrized. Throws SizeError for n < 2.
GaussianStats gaussian_stats_from_features(const Tensor& features);
GaussianStats gaussian_stats(const FeatureExtractor& f, const Tensor& image_rows);

// Square root of a symmetric PSD matrix by eigendecomposition; negative
// eigenvalues are clamped to zero.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the trace of the
// root taken as Tr((A^(1/2) S_b A^(1/2))^(1/2)). Tiny negative results are
// clamped to 0; anything below -1e-6 raises NumericsError.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// ---------------------------------------------------------------------------
// Reports

enum class MetricKind { kMse, kProxyFid };

std::string to_string(MetricKind kind);
MetricKind metric_kind_from_string(const std::string& name);

struct MetricsReport {
  // Kind of the utility values; backdoor_error_kind may differ (a fixed-image
  // GAN target is scored by MSE).
  MetricKind kind = MetricKind::kMse;
  MetricKind backdoor_error_kind = MetricKind::kMse;
  std::optional<double> clean_utility;
  std::optional<double> backdoored_utility;
  std::optional<double> backdoor_error;
  // Reference point for backdoor_error (e.g. a clean GAN trained on the target).
  std::optional<double> backdoor_baseline;
  std::optional<double> target_fraction_triggered;
  std::optional<double> target_fraction_clean;
  std::size_t real_samples = 0;
  std::size_t generated_samples = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

// Throws NumericsError if any present value is negative or non-finite.
void check_report(const MetricsReport& r);

struct GanEvalInputs {
  const Generator* clean = nullptr;       // optional clean GAN
  const Generator* backdoored = nullptr;  // required
  const Generator* target_clean = nullptr;  // optional clean GAN trained on the target
  const FeatureExtractor* features = nullptr;
  const Dataset* original_test = nullptr;
  // DistributionTarget (scored by proxy-FID) or FixedImageTarget (by MSE).
  TargetSpec target = InverseTarget{};
  // Labels defining the target distribution, for the classifier-based
  // fraction; empty to skip.
  std::set<int> target_labels;
  NoiseTrigger trigger;
  std::size_t n_samples = 2048;
  std::uint64_t seed = 0;
};

// Proxy-FID between real original-test features and generations on clean
// noise; the same draws gan_utility_and_backdoor uses for a given seed.
double gan_utility(const Generator& gen, const FeatureExtractor& f, const Dataset& original_test, std::size_t n,
                   std::uint64_t seed);

// Utility: proxy-FID between real original-test features and generations on
// clean noise, for the backdoored and (if given) the clean generator. Backdoor
// error: proxy-FID between real target features and triggered-noise
// generations, or MSE to a fixed target image.
MetricsReport gan_utility_and_backdoor(const GanEvalInputs& in);

}  // namespace bdl
