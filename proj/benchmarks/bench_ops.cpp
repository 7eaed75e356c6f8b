#include "xrot/autodiff/ops.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using TF = xrot::ad::Tensor<float>;

TF random_tensor(const xrot::ad::Shape& shape, std::mt19937_64& rng, bool grad = false) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  xrot::ad::Buffer<float> v(xrot::ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return TF::from_data(shape, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const auto a = random_tensor({1, n, n}, rng), b = random_tensor({1, n, n}, rng);
  xrot::ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(xrot::ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const auto x = random_tensor({8, 32, side, side}, rng);
  const auto w = random_tensor({32, 32, 3, 3}, rng), b = random_tensor({32}, rng);
  xrot::ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(xrot::ad::conv2d(x, w, b, {1, 1}));
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

void BM_Conv3x3Backward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({8, 32, 16, 16}, rng, true);
  const auto w = random_tensor({32, 32, 3, 3}, rng, true), b = random_tensor({32}, rng, true);
  for (auto _ : state) {
    auto loss = xrot::ad::sum(xrot::ad::conv2d(x, w, b, {1, 1}));
    loss.backward();
  }
}
BENCHMARK(BM_Conv3x3Backward);

}  // namespace
