#include <benchmark/benchmark.h>

#include "semiseg/augment.hpp"
#include "semiseg/losses.hpp"
#include "semiseg/network.hpp"
#include "semiseg/phantom.hpp"
#include "semiseg/preprocess.hpp"
#include "semiseg/random.hpp"

using namespace semiseg;

namespace {

Volume noise(std::size_t edge, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  Volume v({edge, edge, edge});
  for (float& x : v.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

MaskTensor mask_noise(std::size_t edge, std::uint64_t seed, bool binary) {
  Rng rng(seed);
  MaskTensor m(default_class_names(), {edge, edge, edge});
  for (double& x : m.values()) x = binary ? (rng.uniform() < 0.3 ? 1.0 : 0.0) : rng.uniform(0.01, 0.99);
  return m;
}

NetworkConfig network_for(std::size_t edge) {
  NetworkConfig cfg;
  cfg.input_size = edge;
  return cfg;
}

void BM_Forward(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  const SegmentationModel m = build_model(network_for(edge), 1);
  const Volume x = noise(edge, 2, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(edge * edge * edge));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  const SegmentationModel m = build_model(network_for(edge), 1);
  const Volume x = noise(edge, 2, 0, 1);
  const MaskTensor y = mask_noise(edge, 3, true);
  TrainingPass<float> pass;
  Gradients g = zero_gradients(m.params);
  for (auto _ : state) {
    const MaskTensor& p = pass.forward(m, x);
    pass.backward(m, combined_loss_grad(p, y, LossConfig{}).grad, g);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(edge * edge * edge));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Preprocess(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  const Volume raw = generate_phantom(4, edge).image;
  const PreprocessConfig cfg = PreprocessConfig::for_edge(edge);
  for (auto _ : state) benchmark::DoNotOptimize(preprocess_pipeline(raw, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(edge * edge * edge));
}
BENCHMARK(BM_Preprocess)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_CombinedLossGrad(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  const MaskTensor p = mask_noise(edge, 5, false);
  const MaskTensor y = mask_noise(edge, 6, true);
  const LossConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(combined_loss_grad(p, y, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.size()));
}
BENCHMARK(BM_CombinedLossGrad)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_ApplyTransform(benchmark::State& state) {
  const Volume v = noise(32, 7, 0, 1);
  const SpatialTransform t = sample_transform(11);
  for (auto _ : state) benchmark::DoNotOptimize(apply_transform(t, v));
}
BENCHMARK(BM_ApplyTransform)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
