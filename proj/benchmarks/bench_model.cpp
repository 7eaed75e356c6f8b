#include "xrot/model/loss.hpp"
#include "xrot/model/network.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

template <typename T>
xrot::ad::Tensor<T> random_images(std::size_t batch, std::size_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<T> u(0, 1);
  xrot::ad::Buffer<T> v(batch * 3 * side * side);
  for (auto& x : v) x = u(rng);
  return xrot::ad::Tensor<T>::from_data({batch, 3, side, side}, std::move(v));
}

void BM_ToyForward(benchmark::State& state) {
  const auto cfg = xrot::ModelConfig::toy();
  xrot::RotationNet<float> net(cfg);
  std::mt19937_64 rng(1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto a = random_images<float>(batch, cfg.image_size, rng), b = random_images<float>(batch, cfg.image_size, rng);
  xrot::ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(a, b, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ToyForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ToyTrainStep(benchmark::State& state) {
  const auto cfg = xrot::ModelConfig::toy();
  xrot::RotationNet<float> net(cfg);
  std::mt19937_64 rng(2);
  const auto a = random_images<float>(8, cfg.image_size, rng), b = random_images<float>(8, cfg.image_size, rng);
  const std::vector<xrot::UnitQuaternion> targets(8, xrot::UnitQuaternion::identity());
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto loss = xrot::rotation_loss(net.forward(a, b, {true, step++}), targets, cfg.rotation_mode);
    loss.backward();
  }
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

void BM_PaperForward(benchmark::State& state) {
  const xrot::ModelConfig cfg;
  xrot::RotationNet<float> net(cfg);
  std::mt19937_64 rng(3);
  const auto a = random_images<float>(1, cfg.image_size, rng), b = random_images<float>(1, cfg.image_size, rng);
  xrot::ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(a, b, {}));
}
BENCHMARK(BM_PaperForward)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
