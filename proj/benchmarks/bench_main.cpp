#include <benchmark/benchmark.h>

#include "bdl/autoencoder.hpp"
#include "bdl/gan.hpp"
#include "bdl/metrics.hpp"

namespace bdl {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(shape_size(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor({64, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(g.value(g.matmul(g.borrow(a), g.borrow(b))).data().data());
  }
  state.SetItemsProcessed(state.iterations() * 64 * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_Matmul)->Arg(256)->Arg(512)->Arg(784);

void BM_AutoencoderStep(benchmark::State& state) {
  Rng rng(3);
  AutoencoderModel m = make_autoencoder(ImageShape{28, 28, 1}, LossKind::kBce, rng);
  std::vector<Tensor*> params = m.encoder.parameters();
  for (Tensor* p : m.decoder.parameters()) params.push_back(p);
  Optimizer opt(OptimizerSettings::adam(1e-3), params);
  Tensor x = random_tensor({64, 784}, 4);
  for (auto& v : x.storage()) v = 0.5f + 0.5f * v;
  for (auto _ : state) {
    Graph g;
    const Var in = g.borrow(x);
    const Var out = Mlp::forward(g, m.decoder.bind(g, true), Mlp::forward(g, m.encoder.bind(g, true), in));
    g.backward(ae_loss(g, LossKind::kBce, out, in));
    opt.step();
  }
}
BENCHMARK(BM_AutoencoderStep)->Unit(benchmark::kMillisecond);

void BM_GeneratorForward(benchmark::State& state) {
  Rng rng(5);
  const ImageShape shape{28, 28, 1};
  Generator gen{Mlp(generator_spec(64, shape), rng), 64, shape};
  const Tensor z = sample_noise(64, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(generate(gen, z).data().data());
}
BENCHMARK(BM_GeneratorForward)->Unit(benchmark::kMicrosecond);

void BM_AdamStep(benchmark::State& state) {
  Tensor p = random_tensor({static_cast<std::size_t>(state.range(0))}, 6);
  p.set_requires_grad(true);
  Optimizer opt(OptimizerSettings::adam(2e-4, 0.5, 0.999), {&p});
  const Tensor grad = random_tensor(p.shape(), 7);
  for (auto _ : state) {
    p.zero_grad() = grad.storage();
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AdamStep)->Arg(1 << 16)->Arg(1 << 19);

void BM_FrechetDistance(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const GaussianStats a = gaussian_stats_from_features(random_tensor({4 * d, d}, 8));
  const GaussianStats b = gaussian_stats_from_features(random_tensor({4 * d, d}, 9));
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace bdl

BENCHMARK_MAIN();
