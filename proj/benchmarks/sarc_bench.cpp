#include <benchmark/benchmark.h>

#include <random>

#include "sarc/adam.hpp"
#include "sarc/features.hpp"
#include "sarc/model.hpp"
#include "sarc/ops.hpp"
#include "sarc/synthetic.hpp"

namespace {

using namespace sarc;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// args: batch, channels in/out, spatial size
void BM_Conv2dForward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const Tensor x = random_tensor({b, c, s, s}, 1), w = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, 1, 1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b * c * c * s * s * 9));
}
BENCHMARK(BM_Conv2dForward)->Args({40, 8, 16})->Args({40, 16, 8})->Args({8, 64, 56});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  Tensor x = random_tensor({b, c, s, s}, 1), w = random_tensor({c, c, 3, 3}, 2);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  for (auto _ : state) {
    const Tensor loss = sum(conv2d(x, w, 1, 1));
    loss.backward();
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({40, 8, 16})->Args({40, 16, 8});

void BM_CorrelationProfile(benchmark::State& state) {
  SyntheticSpec spec;
  spec.image_size = static_cast<std::size_t>(state.range(0));
  const SyntheticCell cell = render_cell(spec, 5, 11);
  for (auto _ : state) benchmark::DoNotOptimize(correlation_profile(cell.image, cell.mask));
}
BENCHMARK(BM_CorrelationProfile)->Arg(96)->Arg(128);

// One minibatch forward + backward + Adam update of the scaled network.
void BM_TrainStep(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  SarcNetConfig cfg = SarcNetConfig::scaled();
  SarcNetParams params = init_params<float>(cfg);
  auto named = params.parameters();
  AdamState<float> adam;
  const Tensor images = random_tensor({b, 3, cfg.input_size, cfg.input_size}, 3);
  const Tensor feats = random_tensor({b, cfg.feature_dim()}, 4);
  const Tensor target = random_tensor({b, 1}, 5);
  for (auto _ : state) {
    params.zero_grad();
    const Tensor loss = mse_loss(sarcnet_forward(images, feats, params, Mode::kTrain), target);
    loss.backward();
    adam_step<float>(named, adam);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b));
}
BENCHMARK(BM_TrainStep)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
