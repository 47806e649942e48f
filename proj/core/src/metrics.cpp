#include "bdl/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "bdl/denormals.hpp"
#include "bdl/errors.hpp"
#include "bdl/optim.hpp"

namespace bdl {

namespace {

constexpr std::size_t kEvalChunk = 500;
constexpr std::uint64_t kFeatureInitStream = 21;
constexpr std::uint64_t kFeatureBatchStream = 22;
constexpr std::uint64_t kRealSampleStream = 31;
constexpr std::uint64_t kCleanNoiseStream = 32;
constexpr std::uint64_t kTriggerNoiseStream = 33;

// Sum over rows of mean squared difference between two equal-shape row sets.
double sum_row_mse(const Tensor& a, const Tensor& b) {
  const auto rows = a.dim(0), cols = a.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = static_cast<double>(a[r * cols + c]) - b[r * cols + c];
      acc += d * d;
    }
    total += acc / static_cast<double>(cols);
  }
  return total;
}

template <typename Fn>
void for_each_chunk(std::size_t count, Fn&& fn) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < count; start += kEvalChunk) {
    idx.resize(std::min(kEvalChunk, count - start));
    std::iota(idx.begin(), idx.end(), start);
    fn(std::span<const std::size_t>(idx));
  }
}

Tensor feature_rows_to_eval(const FeatureExtractor& f, const Tensor& rows) {
  if (rows.rank() != 2 || rows.dim(1) != f.image_shape.size()) {
    throw DimensionError("feature extractor expects n x " + std::to_string(f.image_shape.size()) + ", got " +
                         shape_str(rows.shape()));
  }
  return rows;
}

Tensor generate_chunked(const Generator& gen, const Tensor& z) {
  std::vector<float> out;
  const auto n = z.dim(0), d = z.dim(1);
  out.reserve(n * gen.image_shape.size());
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const auto m = std::min(kEvalChunk, n - start);
    Tensor part({m, d}, std::vector<float>(z.data().begin() + static_cast<std::ptrdiff_t>(start * d),
                                           z.data().begin() + static_cast<std::ptrdiff_t>((start + m) * d)));
    Tensor img = generate(gen, part);
    out.insert(out.end(), img.data().begin(), img.data().end());
  }
  return Tensor({n, gen.image_shape.size()}, std::move(out));
}

Tensor sample_rows(const Dataset& d, std::size_t n, std::uint64_t seed) {
  auto perm = epoch_permutation(d.count(), seed, 0);
  perm.resize(std::min(n, d.count()));
  return d.gather(perm);
}

}  // namespace

double reconstruction_mse(const AutoencoderModel& model, const Dataset& test) {
  if (test.count() == 0) throw DegenerateDatasetError("test set is empty");
  double total = 0.0;
  for_each_chunk(test.count(), [&](std::span<const std::size_t> idx) {
    const Tensor x = test.gather(idx);
    total += sum_row_mse(reconstruct(model, x), x);
  });
  return total / static_cast<double>(test.count());
}

double backdoor_error_ae(const AutoencoderModel& model, const Dataset& test, const ImagePatchTrigger& trigger,
                         const TargetSpec& target) {
  if (test.count() == 0) throw DegenerateDatasetError("test set is empty");
  const auto shape = test.image_shape();
  check_trigger_fits(trigger, shape);
  check_target_fits(target, shape);
  double total = 0.0;
  for_each_chunk(test.count(), [&](std::span<const std::size_t> idx) {
    Tensor x = test.gather(idx);
    const Tensor expected = make_target_rows(x, shape, target);
    apply_image_trigger_rows(x, shape, trigger);
    total += sum_row_mse(reconstruct(model, x), expected);
  });
  return total / static_cast<double>(test.count());
}

FeatureExtractor train_feature_extractor(const Dataset& train, const FeatureExtractorConfig& cfg, const Dataset* heldout) {
  const FlushDenormalsScope ftz;
  if (!train.has_labels()) throw ContractError("feature extractor training needs a labeled dataset");
  const auto& labels = *train.labels();
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw ContractError("feature extractor training needs at least 2 classes");
  if (*classes.begin() < 0) throw RangeError("negative class label");
  const std::size_t num_classes = static_cast<std::size_t>(*classes.rbegin()) + 1;

  std::optional<Dataset> split_train, split_heldout;
  const Dataset* fit = &train;
  if (!heldout) {
    const std::size_t n_hold = std::max<std::size_t>(1, train.count() / 10);
    if (n_hold >= train.count()) throw DegenerateDatasetError("dataset too small to hold out a validation split");
    std::vector<std::size_t> a(train.count() - n_hold), b(n_hold);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), train.count() - n_hold);
    split_train = train.subset(a);
    split_heldout = train.subset(b);
    fit = &*split_train;
    heldout = &*split_heldout;
  }

  const auto shape = train.image_shape();
  Rng init(derive_seed(cfg.seed, kFeatureInitStream));
  FeatureExtractor f;
  f.net = Mlp(MlpSpec{shape.size(),
                      {{cfg.hidden, Activation::kRelu},
                       {cfg.feature_dim, Activation::kRelu},
                       {num_classes, Activation::kIdentity}}},
              init);
  f.feature_dim = cfg.feature_dim;
  f.num_classes = num_classes;
  f.image_shape = shape;
  f.dataset = train.name();
  f.seed = cfg.seed;

  Optimizer opt(OptimizerSettings::adam(cfg.learning_rate), f.net.parameters());
  const BatchPlan plan{std::min(cfg.batch_size, fit->count()), derive_seed(cfg.seed, kFeatureBatchStream), true};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : batches(*fit, plan, epoch)) {
      const Tensor x = fit->gather(idx);
      const auto y = fit->gather_labels(idx);
      Graph g;
      auto bound = f.net.bind(g, true);
      auto loss = g.softmax_cross_entropy(Mlp::forward(g, bound, g.borrow(x)), y);
      if (!std::isfinite(g.value(loss).item())) throw NumericsError("non-finite classifier loss");
      g.backward(loss);
      opt.step();
    }
  }
  f.heldout_accuracy = classification_accuracy(f, *heldout);
  if (f.heldout_accuracy < cfg.min_accuracy) {
    throw CalibrationError("feature extractor held-out accuracy " + std::to_string(f.heldout_accuracy) +
                           " is below " + std::to_string(cfg.min_accuracy) + "; train for more epochs");
  }
  return f;
}

Tensor extract_features(const FeatureExtractor& f, const Tensor& rows) {
  return f.net.infer(feature_rows_to_eval(f, rows), f.net.spec().layers.size() - 1);
}

std::vector<int> classify(const FeatureExtractor& f, const Tensor& rows) {
  const Tensor logits = f.net.infer(feature_rows_to_eval(f, rows));
  const auto n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = logits.data().data() + r * k;
    out[r] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double classification_accuracy(const FeatureExtractor& f, const Dataset& d) {
  if (!d.has_labels()) throw ContractError("accuracy needs a labeled dataset");
  std::size_t correct = 0;
  for_each_chunk(d.count(), [&](std::span<const std::size_t> idx) {
    const auto pred = classify(f, d.gather(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == (*d.labels())[idx[i]];
  });
  return static_cast<double>(correct) / static_cast<double>(d.count());
}

double label_fraction(const FeatureExtractor& f, const Tensor& rows, const std::set<int>& labels) {
  const auto pred = classify(f, rows);
  if (pred.empty()) throw SizeError("label_fraction of an empty batch");
  const auto hits = std::count_if(pred.begin(), pred.end(), [&](int p) { return labels.count(p) > 0; });
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

GaussianStats gaussian_stats_from_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("features must be n x d, got " + shape_str(features.shape()));
  const auto n = features.dim(0), d = features.dim(1);
  if (n < 2) throw SizeError("gaussian_stats needs at least 2 samples, got " + std::to_string(n));
  Eigen::MatrixXd x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) x(r, c) = features[r * d + c];
  }
  GaussianStats s;
  s.n = n;
  s.mean = x.colwise().mean().transpose();
  x.rowwise() -= s.mean.transpose();
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  s.cov = 0.5 * (cov + cov.transpose());
  return s;
}

GaussianStats gaussian_stats(const FeatureExtractor& f, const Tensor& image_rows) {
  std::vector<float> feats;
  const auto n = image_rows.dim(0), p = image_rows.dim(1);
  feats.reserve(n * f.feature_dim);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const auto m = std::min(kEvalChunk, n - start);
    Tensor part({m, p}, std::vector<float>(image_rows.data().begin() + static_cast<std::ptrdiff_t>(start * p),
                                           image_rows.data().begin() + static_cast<std::ptrdiff_t>((start + m) * p)));
    Tensor fe = extract_features(f, part);
    feats.insert(feats.end(), fe.data().begin(), fe.data().end());
  }
  return gaussian_stats_from_features(Tensor({n, f.feature_dim}, std::move(feats)));
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("sqrt_psd needs a square matrix");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericsError("eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("Frechet distance between " + std::to_string(a.dim()) + "- and " + std::to_string(b.dim()) +
                         "-dimensional statistics");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd root_a = sqrt_psd(a.cov);
  const Eigen::MatrixXd inner = root_a * b.cov * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericsError("eigendecomposition failed");
  const double trace_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_root;
  if (value < -1e-6) throw NumericsError("negative Frechet distance " + std::to_string(value) + ": broken square root");
  return std::max(value, 0.0);
}

std::string to_string(MetricKind kind) { return kind == MetricKind::kMse ? "mse" : "proxy_fid"; }

MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "mse") return MetricKind::kMse;
  if (name == "proxy_fid") return MetricKind::kProxyFid;
  throw FormatError("unknown metric kind '" + name + "'");
}

void check_report(const MetricsReport& r) {
  for (const auto& v : {r.clean_utility, r.backdoored_utility, r.backdoor_error, r.backdoor_baseline,
                        r.target_fraction_triggered, r.target_fraction_clean}) {
    if (v && !(std::isfinite(*v) && *v >= 0.0)) throw NumericsError("metrics report holds an invalid value");
  }
}

double gan_utility(const Generator& gen, const FeatureExtractor& f, const Dataset& original_test, std::size_t n,
                   std::uint64_t seed) {
  if (n < 2) throw SizeError("gan evaluation needs at least 2 samples");
  const Tensor real = sample_rows(original_test, n, derive_seed(seed, kRealSampleStream));
  Rng clean_rng(derive_seed(seed, kCleanNoiseStream));
  const Tensor z = sample_noise(n, gen.noise_dim, clean_rng);
  return frechet_distance(gaussian_stats(f, real), gaussian_stats(f, generate_chunked(gen, z)));
}

MetricsReport gan_utility_and_backdoor(const GanEvalInputs& in) {
  if (!in.backdoored || !in.features || !in.original_test) {
    throw ContractError("gan evaluation needs a backdoored generator, a feature extractor and an original test set");
  }
  const Generator& gbd = *in.backdoored;
  const std::size_t n = in.n_samples;
  if (n < 2) throw SizeError("gan evaluation needs at least 2 samples");

  MetricsReport r;
  r.kind = MetricKind::kProxyFid;
  r.seed = in.seed;
  r.generated_samples = n;
  if (n < in.features->feature_dim + 1) {
    r.warnings.push_back("n_samples " + std::to_string(n) + " < feature_dim + 1 = " +
                         std::to_string(in.features->feature_dim + 1) + ": covariance is rank-deficient");
  }

  const Tensor real = sample_rows(*in.original_test, n, derive_seed(in.seed, kRealSampleStream));
  r.real_samples = real.dim(0);
  const GaussianStats real_stats = gaussian_stats(*in.features, real);

  Rng clean_rng(derive_seed(in.seed, kCleanNoiseStream));
  const Tensor z = sample_noise(n, gbd.noise_dim, clean_rng);
  Rng trig_rng(derive_seed(in.seed, kTriggerNoiseStream));
  const Tensor z_bd = apply_noise_trigger(sample_noise(n, gbd.noise_dim, trig_rng), in.trigger);

  const Tensor bd_clean = generate_chunked(gbd, z);
  r.backdoored_utility = frechet_distance(real_stats, gaussian_stats(*in.features, bd_clean));
  if (in.clean) {
    r.clean_utility = frechet_distance(real_stats, gaussian_stats(*in.features, generate_chunked(*in.clean, z)));
  }

  const Tensor bd_triggered = generate_chunked(gbd, z_bd);
  if (const auto* dist = std::get_if<DistributionTarget>(&in.target)) {
    r.backdoor_error_kind = MetricKind::kProxyFid;
    const Tensor target_real = sample_rows(*dist->dataset, n, derive_seed(in.seed, kRealSampleStream + 100));
    const GaussianStats target_stats = gaussian_stats(*in.features, target_real);
    r.backdoor_error = frechet_distance(target_stats, gaussian_stats(*in.features, bd_triggered));
    if (in.target_clean) {
      r.backdoor_baseline =
          frechet_distance(target_stats, gaussian_stats(*in.features, generate_chunked(*in.target_clean, z)));
    }
  } else if (const auto* fixed = std::get_if<FixedImageTarget>(&in.target)) {
    r.backdoor_error_kind = MetricKind::kMse;
    Tensor expected = make_target_rows(bd_triggered, gbd.image_shape, *fixed);
    r.backdoor_error = sum_row_mse(bd_triggered, expected) / static_cast<double>(n);
  } else {
    throw ContractError("GAN targets must be a distribution or a fixed image");
  }

  if (!in.target_labels.empty()) {
    r.target_fraction_triggered = label_fraction(*in.features, bd_triggered, in.target_labels);
    r.target_fraction_clean = label_fraction(*in.features, bd_clean, in.target_labels);
  }
  check_report(r);
  return r;
}

}  // namespace bdl
