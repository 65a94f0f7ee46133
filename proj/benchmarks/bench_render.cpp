#include <benchmark/benchmark.h>

#include "affbench/synthetic.hpp"

using namespace affbench;

namespace {

void BM_RenderCenter(benchmark::State& state) {
  SceneSpec spec;
  Vec2 pos{spec.width / 2.0, spec.height / 2.0};
  uint64_t key = 0;
  for (auto _ : state) {
    RawImage img = render_scene(spec, 1, pos, 7.5, CameraId::center, key, key + 1);
    benchmark::DoNotOptimize(img.pixels.data());
    ++key;
  }
}
BENCHMARK(BM_RenderCenter)->Unit(benchmark::kMillisecond);

void BM_RenderDegradedSide(benchmark::State& state) {
  SceneSpec spec;
  Vec2 pos{spec.width / 2.0, spec.height / 2.0};
  uint64_t key = 0;
  for (auto _ : state) {
    RawImage img = render_scene(spec, 1, pos, 7.5, CameraId::left, key, key + 1);
    benchmark::DoNotOptimize(img.pixels.data());
    ++key;
  }
}
BENCHMARK(BM_RenderDegradedSide)->Unit(benchmark::kMillisecond);

void BM_ApplyEffect(benchmark::State& state) {
  SceneSpec spec;
  SplitMix64 rng(3);
  Vec2 p0{spec.width / 2.0, spec.height / 2.0};
  for (auto _ : state) {
    auto [p1, rot] = apply_effect(p0, Action::pull, Tool::slingshot, rng);
    benchmark::DoNotOptimize(p1);
    benchmark::DoNotOptimize(rot);
  }
}
BENCHMARK(BM_ApplyEffect);

}  // namespace
