#include "bdl/gan.hpp"

#include <cmath>
#include <utility>

#include "bdl/denormals.hpp"
#include "bdl/errors.hpp"

namespace bdl {

namespace {

constexpr std::uint64_t kGeneratorInitStream = 11;
constexpr std::uint64_t kDiscriminatorInitStream = 12;
constexpr std::uint64_t kBackdoorDiscriminatorInitStream = 13;
constexpr std::uint64_t kNoiseStream = 14;
constexpr std::uint64_t kTargetStream = 15;
constexpr std::uint64_t kProbeStream = 16;
constexpr std::uint64_t kGanBatchStream = 17;

Var clamped_scores(Graph& g, Var scores) { return g.clamp(scores, kScoreClamp, 1.0f - kScoreClamp); }

void require_non_empty(const Graph& g, Var scores, const char* what) {
  if (g.value(scores).size() == 0) throw ContractError(std::string(what) + ": empty score batch");
}

// Cycles through a seeded permutation of a target dataset, reshuffling on
// wrap-around.
class TargetSampler {
 public:
  TargetSampler(const Dataset& d, std::uint64_t seed) : data_(d), seed_(seed) { reshuffle(); }

  Tensor next(std::size_t n) {
    std::vector<std::size_t> idx;
    idx.reserve(n);
    while (idx.size() < n) {
      if (cursor_ == perm_.size()) reshuffle();
      idx.push_back(perm_[cursor_++]);
    }
    return data_.gather(idx);
  }

 private:
  void reshuffle() {
    perm_ = epoch_permutation(data_.count(), seed_, round_++);
    cursor_ = 0;
  }

  const Dataset& data_;
  std::uint64_t seed_;
  std::uint64_t round_ = 0;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
};

Tensor replicate(const Tensor& image, std::size_t n) {
  std::vector<float> out;
  out.reserve(n * image.size());
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), image.data().begin(), image.data().end());
  return Tensor({n, image.size()}, std::move(out));
}

double mean_pixel_variance(const Tensor& batch) {
  const auto rows = batch.dim(0), cols = batch.dim(1);
  if (rows < 2) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += batch[r * cols + c];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = batch[r * cols + c] - mean;
      var += d * d;
    }
    total += var / static_cast<double>(rows - 1);
  }
  return total / static_cast<double>(cols);
}

}  // namespace

MlpSpec generator_spec(std::size_t noise_dim, const ImageShape& shape) {
  return {noise_dim, {{256, Activation::kLeakyRelu}, {512, Activation::kLeakyRelu}, {shape.size(), Activation::kSigmoid}}};
}

MlpSpec discriminator_spec(const ImageShape& shape) {
  return {shape.size(), {{256, Activation::kLeakyRelu}, {1, Activation::kSigmoid}}};
}

Var discriminator_scores(Graph& g, const BoundMlp& d, Var images) {
  return Mlp::forward(g, d, g.shift(g.scale(images, 2.0f), -1.0f));
}

Tensor discriminator_scores(const Mlp& d, const Tensor& images) {
  Graph g;
  return g.value(discriminator_scores(g, d.bind(g), g.borrow(images)));
}

Tensor sample_noise(std::size_t batch, std::size_t noise_dim, Rng& rng) {
  if (batch == 0 || noise_dim == 0) throw SizeError("noise batch and dimension must be positive");
  std::vector<float> z(batch * noise_dim);
  for (auto& v : z) v = static_cast<float>(rng.normal());
  return Tensor({batch, noise_dim}, std::move(z));
}

Var discriminator_loss(Graph& g, Var real_scores, Var fake_scores) {
  require_non_empty(g, real_scores, "discriminator_loss");
  require_non_empty(g, fake_scores, "discriminator_loss");
  auto real_term = g.mean(g.log(clamped_scores(g, real_scores)));
  auto fake_term = g.mean(g.log(g.shift(g.neg(clamped_scores(g, fake_scores)), 1.0f)));
  return g.neg(g.add(real_term, fake_term));
}

Var generator_loss_clean(Graph& g, Var fake_scores) {
  require_non_empty(g, fake_scores, "generator_loss_clean");
  return g.neg(g.mean(g.log(clamped_scores(g, fake_scores))));
}

Var generator_loss_backdoored(Graph& g, Var clean_scores, Var backdoor_scores) {
  require_non_empty(g, clean_scores, "generator_loss_backdoored");
  require_non_empty(g, backdoor_scores, "generator_loss_backdoored");
  auto clean_term = g.scale(g.mean(g.log(clamped_scores(g, clean_scores))), 0.5f);
  auto backdoor_term = g.scale(g.mean(g.log(clamped_scores(g, backdoor_scores))), 0.5f);
  return g.neg(g.add(clean_term, backdoor_term));
}

Tensor generate(const Generator& gen, const Tensor& z) {
  if (z.rank() == 1) {
    if (z.size() != gen.noise_dim) {
      throw DimensionError("noise " + shape_str(z.shape()) + " vs generator d_z " + std::to_string(gen.noise_dim));
    }
    return gen.net.infer(z.reshaped({1, z.size()})).reshaped(gen.image_shape.as_shape());
  }
  if (z.rank() != 2 || z.dim(1) != gen.noise_dim) {
    throw DimensionError("noise " + shape_str(z.shape()) + " vs generator d_z " + std::to_string(gen.noise_dim));
  }
  return gen.net.infer(z);
}

void validate(const GanTrainConfig& cfg, const ImageShape& shape) {
  if (cfg.epochs < 1) throw ValidationError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (cfg.noise_dim < 1) throw ValidationError("noise dimension must be positive");
  if (cfg.discriminator_steps < 1 || cfg.generator_steps < 1) throw ValidationError("step counts must be positive");
  if (!cfg.backdoor) return;
  try {
    resolve_noise_index(cfg.trigger, cfg.noise_dim);
  } catch (const RangeError& e) {
    throw ValidationError(e.what());
  }
  if (std::holds_alternative<InverseTarget>(cfg.target)) {
    throw ValidationError("GAN targets must be a distribution or a fixed image");
  }
  check_target_fits(cfg.target, shape);
}

GanTrainResult train_gan(const GanTrainConfig& cfg, const Dataset& original, const GanEpochCallback& on_epoch) {
  const FlushDenormalsScope ftz;
  if (original.count() == 0) throw DegenerateDatasetError("original dataset is empty");
  const ImageShape shape = original.image_shape();
  validate(cfg, shape);

  GanTrainResult result;
  GanModel& model = result.model;
  {
    Rng g_rng(derive_seed(cfg.seed, kGeneratorInitStream));
    Rng d_rng(derive_seed(cfg.seed, kDiscriminatorInitStream));
    model.generator = Generator{Mlp(generator_spec(cfg.noise_dim, shape), g_rng), cfg.noise_dim, shape};
    model.discriminators.d = Mlp(discriminator_spec(shape), d_rng);
    if (cfg.backdoor) {
      Rng dbd_rng(derive_seed(cfg.seed, kBackdoorDiscriminatorInitStream));
      model.discriminators.d_bd = Mlp(discriminator_spec(shape), dbd_rng);
    }
  }
  Mlp& gen = model.generator.net;
  Mlp& disc = model.discriminators.d;

  Optimizer g_opt(cfg.generator_optimizer, gen.parameters());
  Optimizer d_opt(cfg.discriminator_optimizer, disc.parameters());
  std::optional<Optimizer> dbd_opt;
  if (cfg.backdoor) dbd_opt.emplace(cfg.discriminator_optimizer, model.discriminators.d_bd->parameters());

  const std::size_t batch = std::min(cfg.batch_size, original.count());
  const BatchPlan plan{batch, derive_seed(cfg.seed, kGanBatchStream), true};
  Rng noise_rng(derive_seed(cfg.seed, kNoiseStream));

  std::optional<TargetSampler> target_sampler;
  std::optional<Tensor> fixed_target_batch;
  if (cfg.backdoor) {
    if (const auto* dist = std::get_if<DistributionTarget>(&cfg.target)) {
      target_sampler.emplace(*dist->dataset, derive_seed(cfg.seed, kTargetStream));
    } else {
      fixed_target_batch = replicate(std::get<FixedImageTarget>(cfg.target).image, batch);
    }
  }
  const auto triggered = [&](Tensor z) { return apply_noise_trigger(z, cfg.trigger); };

  Tensor probe_noise = [&] {
    Rng probe_rng(derive_seed(cfg.seed, kProbeStream));
    return sample_noise(std::max<std::size_t>(2, cfg.probe_batch), cfg.noise_dim, probe_rng);
  }();

  const auto check = [&](float v, const char* what, std::size_t epoch, std::size_t it) {
    if (!std::isfinite(v)) {
      throw NumericsError(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch) + ", iteration " +
                          std::to_string(it));
    }
  };

  // Loss of one discriminator on `real` vs generator(z); leaves gradients on d.
  const auto discriminator_pass = [&](Mlp& d, const Tensor& real, const Tensor& z) {
    Graph g;
    auto gb = std::as_const(gen).bind(g);
    auto db = d.bind(g, true);
    auto fake = Mlp::forward(g, gb, g.borrow(z));
    auto real_scores = discriminator_scores(g, db, g.borrow(real));
    auto fake_scores = discriminator_scores(g, db, fake);
    auto loss = discriminator_loss(g, real_scores, fake_scores);
    const float v = g.value(loss).item();
    g.backward(loss);
    return v;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    GanEpochStats stats;
    stats.epoch = epoch;
    double d_sum = 0.0, dbd_sum = 0.0, g_sum = 0.0;
    std::size_t d_count = 0, dbd_count = 0, g_count = 0;
    const auto plan_batches = batches(original, plan, epoch);
    for (std::size_t it = 0; it < plan_batches.size(); ++it) {
      const Tensor real = original.gather(plan_batches[it]);

      for (std::size_t s = 0; s < cfg.discriminator_steps; ++s) {
        // (1) D: original reals vs G(z).
        const float dv = discriminator_pass(disc, real, sample_noise(batch, cfg.noise_dim, noise_rng));
        check(dv, "discriminator loss", epoch, it);
        d_opt.step();
        d_sum += dv;
        ++d_count;

        // (2) D_bd: target reals vs G(z_bd).
        if (cfg.backdoor) {
          const Tensor target_real = target_sampler ? target_sampler->next(batch) : *fixed_target_batch;
          const float bv = discriminator_pass(*model.discriminators.d_bd, target_real,
                                              triggered(sample_noise(batch, cfg.noise_dim, noise_rng)));
          check(bv, "backdoor discriminator loss", epoch, it);
          dbd_opt->step();
          dbd_sum += bv;
          ++dbd_count;
        }
      }

      // (3) G with fresh noise; discriminators are read-only here.
      for (std::size_t s = 0; s < cfg.generator_steps; ++s) {
        Graph g;
        auto gb = gen.bind(g, true);
        auto db = std::as_const(disc).bind(g);
        const Tensor z = sample_noise(batch, cfg.noise_dim, noise_rng);
        auto clean_scores = discriminator_scores(g, db, Mlp::forward(g, gb, g.constant(z)));
        Var loss;
        if (cfg.backdoor) {
          const Tensor z_bd = triggered(sample_noise(batch, cfg.noise_dim, noise_rng));
          auto dbdb = std::as_const(*model.discriminators.d_bd).bind(g);
          auto bd_scores = discriminator_scores(g, dbdb, Mlp::forward(g, gb, g.constant(z_bd)));
          loss = generator_loss_backdoored(g, clean_scores, bd_scores);
        } else {
          loss = generator_loss_clean(g, clean_scores);
        }
        const float gv = g.value(loss).item();
        check(gv, "generator loss", epoch, it);
        g.backward(loss);
        g_opt.step();
        g_sum += gv;
        ++g_count;
      }
    }
    stats.mean_d_loss = d_count ? d_sum / static_cast<double>(d_count) : 0.0;
    if (cfg.backdoor) stats.mean_d_bd_loss = dbd_count ? dbd_sum / static_cast<double>(dbd_count) : 0.0;
    stats.mean_g_loss = g_count ? g_sum / static_cast<double>(g_count) : 0.0;
    stats.probe_variance = mean_pixel_variance(gen.infer(probe_noise));
    if (stats.probe_variance < kCollapseVariance) {
      stats.warning = "mode collapse suspected: probe variance " + std::to_string(stats.probe_variance);
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace bdl
