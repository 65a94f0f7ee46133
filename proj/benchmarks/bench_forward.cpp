#include <benchmark/benchmark.h>

#include "affbench/model.hpp"
#include "affbench/trainer.hpp"

using namespace affbench;

namespace {

Batch random_batch(int B, FusionVariant v, uint64_t seed) {
  SplitMix64 rng(seed);
  Batch b;
  for (int k = 0; k < stream_count(v); ++k) {
    Tensor s({B, stream_channels(v), kInputSize, kInputSize});
    for (int64_t i = 0; i < s.numel(); ++i) s.data()[i] = static_cast<float>(rng.normal() * 0.3);
    b.streams.push_back(std::move(s));
  }
  for (int n = 0; n < B; ++n) {
    b.tool_labels.push_back(n % 4);
    b.action_labels.push_back((n + 1) % 4);
    b.joint_labels.push_back(
        encode_joint_label(static_cast<Tool>(n % 4), static_cast<Action>((n + 1) % 4)));
  }
  return b;
}

void forward_bench(benchmark::State& state, FusionVariant v, int depth) {
  ModelConfig cfg;
  cfg.depth = depth;
  cfg.variant = v;
  cfg.head = HeadMode::dual;
  FusionModel m(cfg);
  m.init_weights(1);
  Batch b = random_batch(static_cast<int>(state.range(0)), v, 2);
  for (auto _ : state) {
    Logits out = m.forward(b, false);
    benchmark::DoNotOptimize(out.tool.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Forward_1C1N_d18(benchmark::State& s) {
  forward_bench(s, FusionVariant::shared_central_1c1n, 18);
}
void BM_Forward_3C1N_d18(benchmark::State& s) { forward_bench(s, FusionVariant::stacked_3c1n, 18); }
void BM_Forward_3C6N_d18(benchmark::State& s) { forward_bench(s, FusionVariant::separate_3c6n, 18); }
void BM_Forward_1C1N_d50(benchmark::State& s) {
  forward_bench(s, FusionVariant::shared_central_1c1n, 50);
}
BENCHMARK(BM_Forward_1C1N_d18)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward_3C1N_d18)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward_3C6N_d18)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward_1C1N_d50)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep_1C1N_d18(benchmark::State& state) {
  ModelConfig mc;
  mc.variant = FusionVariant::shared_central_1c1n;
  mc.head = HeadMode::dual;
  FusionModel m(mc);
  m.init_weights(1);
  std::vector<Param*> params;
  m.collect_params(params);
  Adam opt(params, 1e-3);
  Batch b = random_batch(static_cast<int>(state.range(0)), mc.variant, 2);
  for (auto _ : state) {
    m.zero_grad();
    Logits out = m.forward(b, true);
    Logits grads;
    double l = loss(out, b, mc.head, &grads);
    benchmark::DoNotOptimize(l);
    m.backward(grads);
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep_1C1N_d18)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
