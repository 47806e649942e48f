#include "bdl/autoencoder.hpp"

#include <algorithm>
#include <cmath>

#include "bdl/denormals.hpp"
#include "bdl/errors.hpp"

namespace bdl {

std::string to_string(LossKind kind) { return kind == LossKind::kMse ? "mse" : "bce"; }

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "mse") return LossKind::kMse;
  if (name == "bce") return LossKind::kBce;
  throw ValidationError("unknown loss '" + name + "'");
}

std::pair<MlpSpec, MlpSpec> autoencoder_specs(const ImageShape& shape) {
  const std::size_t pixels = shape.size();
  if (pixels == 0) throw SizeError("autoencoder needs a non-empty image shape");
  const auto scaled = [&](double width, std::size_t floor) {
    return std::max<std::size_t>(floor, static_cast<std::size_t>(std::lround(width * static_cast<double>(pixels) / 784.0)));
  };
  const std::size_t hidden = scaled(256, 8);
  const std::size_t latent = scaled(64, 4);
  MlpSpec enc{pixels, {{hidden, Activation::kRelu}, {latent, Activation::kIdentity}}};
  MlpSpec dec{latent, {{hidden, Activation::kRelu}, {pixels, Activation::kSigmoid}}};
  return {enc, dec};
}

AutoencoderModel make_autoencoder(const ImageShape& shape, LossKind loss, Rng& rng) {
  auto [enc, dec] = autoencoder_specs(shape);
  AutoencoderModel m;
  m.encoder = Mlp(enc, rng);
  m.decoder = Mlp(dec, rng);
  m.image_shape = shape;
  m.loss = loss;
  return m;
}

Var ae_loss(Graph& g, LossKind kind, Var prediction, Var reference) {
  const Tensor& p = g.value(prediction);
  const Tensor& r = g.value(reference);
  if (p.shape() != r.shape()) {
    throw DimensionError("loss shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(r.shape()));
  }
  if (kind == LossKind::kMse) {
    auto d = g.sub(prediction, reference);
    return g.mean(g.mul(d, d));
  }
  auto log_p = g.log(prediction);
  auto log_q = g.log(g.shift(g.neg(prediction), 1.0f));
  auto one_minus_r = g.shift(g.neg(reference), 1.0f);
  auto ll = g.add(g.mul(reference, log_p), g.mul(one_minus_r, log_q));
  return g.neg(g.mean(ll));
}

void validate(const AeTrainConfig& cfg, const ImageShape& shape) {
  if (cfg.epochs < 1) throw ValidationError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (!(cfg.poison_fraction >= 0.0 && cfg.poison_fraction <= 1.0)) {
    throw ValidationError("poison fraction must lie in [0, 1]");
  }
  if (cfg.poison_fraction > 0.0) {
    check_trigger_fits(cfg.trigger, shape);
    if (std::holds_alternative<DistributionTarget>(cfg.target)) {
      throw ValidationError("autoencoder targets must be fixed_image or inverse");
    }
    check_target_fits(cfg.target, shape);
  }
}

AeTrainResult train_autoencoder(const AeTrainConfig& cfg, const Dataset& train, const AeEpochCallback& on_epoch) {
  const FlushDenormalsScope ftz;
  if (train.count() == 0) throw DegenerateDatasetError("training set is empty");
  const ImageShape shape = train.image_shape();
  validate(cfg, shape);

  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  AeTrainResult result{make_autoencoder(shape, cfg.loss, init_rng), {}};
  AutoencoderModel& model = result.model;

  auto params = model.encoder.parameters();
  auto dec_params = model.decoder.parameters();
  params.insert(params.end(), dec_params.begin(), dec_params.end());
  Optimizer opt(cfg.optimizer, params);

  const BatchPlan plan{std::min(cfg.batch_size, train.count()), derive_seed(cfg.seed, kBatchStream), true};
  Rng poison_rng(derive_seed(cfg.seed, kPoisonStream));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    AeEpochStats stats;
    stats.epoch = epoch;
    double clean_sum = 0.0, poison_sum = 0.0;
    const auto plan_batches = batches(train, plan, epoch);
    for (std::size_t bi = 0; bi < plan_batches.size(); ++bi) {
      const bool poisoned = cfg.poison_fraction > 0.0 && poison_rng.bernoulli(cfg.poison_fraction);
      Tensor x = train.gather(plan_batches[bi]);
      Tensor reference = poisoned ? make_target_rows(x, shape, cfg.target) : x;
      if (poisoned) apply_image_trigger_rows(x, shape, cfg.trigger);

      Graph g;
      auto enc = model.encoder.bind(g, true);
      auto dec = model.decoder.bind(g, true);
      auto input = g.borrow(x);
      auto out = Mlp::forward(g, dec, Mlp::forward(g, enc, input));
      auto loss = ae_loss(g, cfg.loss, out, g.borrow(reference));
      const float value = g.value(loss).item();
      if (!std::isfinite(value)) {
        throw NumericsError("non-finite autoencoder loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(bi));
      }
      g.backward(loss);
      opt.step();

      if (poisoned) {
        poison_sum += value;
        ++stats.poison_batches;
      } else {
        clean_sum += value;
        ++stats.clean_batches;
      }
    }
    if (stats.clean_batches) stats.mean_clean_loss = clean_sum / static_cast<double>(stats.clean_batches);
    if (stats.poison_batches) stats.mean_poison_loss = poison_sum / static_cast<double>(stats.poison_batches);
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

Tensor reconstruct(const AutoencoderModel& model, const Tensor& x) {
  const std::size_t pixels = model.image_shape.size();
  Tensor batch;
  if (x.rank() == 2 && x.dim(1) == pixels) {
    batch = x;
  } else if (x.size() == pixels && x.rank() >= 2) {
    batch = x.reshaped({1, pixels});
  } else {
    throw DimensionError("input " + shape_str(x.shape()) + " does not match autoencoder image " +
                         to_string(model.image_shape));
  }
  Graph g;
  auto enc = model.encoder.bind(g);
  auto dec = model.decoder.bind(g);
  auto out = Mlp::forward(g, dec, Mlp::forward(g, enc, g.borrow(batch)));
  return g.value(out).reshaped(x.shape());
}

}  // namespace bdl
