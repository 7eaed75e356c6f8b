#include "xrot/panorama.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_RenderCrop(benchmark::State& state) {
  const auto pano = xrot::synth_panorama(1, xrot::PanoramaStyle::Room, 512);
  const auto q = xrot::yaw_pitch_to_quat({30, 10});
  const auto size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(xrot::render_crop(pano, q, 90.0, size));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_RenderCrop)->Arg(64)->Arg(256);

void BM_SynthPanorama(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(xrot::synth_panorama(seed++, xrot::PanoramaStyle::Street, 256));
}
BENCHMARK(BM_SynthPanorama)->Unit(benchmark::kMillisecond);

void BM_CropFootprint(benchmark::State& state) {
  const auto q = xrot::yaw_pitch_to_quat({179, 20});
  for (auto _ : state) benchmark::DoNotOptimize(xrot::crop_footprint(q, 90.0, 256));
}
BENCHMARK(BM_CropFootprint);

}  // namespace
