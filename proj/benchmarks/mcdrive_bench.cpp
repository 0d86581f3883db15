#include <benchmark/benchmark.h>

#include <numeric>

#include "mcdrive/dataset.hpp"
#include "mcdrive/presets.hpp"
#include "mcdrive/simulator.hpp"
#include "mcdrive/train.hpp"
#include "mcdrive/uncertainty.hpp"

using namespace mcdrive;

namespace {

Tensor camera_frame(const InputShape& shape) {
  const Track track = resolve_track("oval");
  CameraConfig cam;
  cam.height = shape.height;
  cam.width = shape.width;
  return render_camera(track, start_state(track, SimConfig{}, 10.0), cam);
}

void BM_McPasses(benchmark::State& state) {
  const auto scale = state.range(0) ? PresetScale::Full : PresetScale::Fast;
  const Network net =
      Network::initialize(build_preset(HeadKind::Classification, scale), 1);
  const Tensor img = camera_frame(net.spec().input);
  const auto passes = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) {
    auto s = mc_samples(net, img, passes, 7);
    benchmark::DoNotOptimize(mutual_information(s));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(passes));
}
BENCHMARK(BM_McPasses)->Args({0, 1})->Args({0, 128})->Args({1, 128})->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const Track track = resolve_track("serpentine");
  CameraConfig cam;
  cam.height = static_cast<int>(state.range(0));
  cam.width = static_cast<int>(state.range(1));
  const SimState s = start_state(track, SimConfig{}, 30.0);
  for (auto _ : state) benchmark::DoNotOptimize(render_camera(track, s, cam));
}
BENCHMARK(BM_Render)->Args({33, 100})->Args({66, 200})->Unit(benchmark::kMicrosecond);

void BM_TrainBatch(benchmark::State& state) {
  const Track track = resolve_track("oval");
  CollectConfig cc;
  cc.sim.camera.height = 33;
  cc.sim.camera.width = 100;
  const Dataset d = collect_run(track, Policy::expert(), 64, 3, cc);
  const TrainingData view = training_view(d, HeadKind::Classification);
  const Network net =
      Network::initialize(build_preset(HeadKind::Classification, PresetScale::Fast), 1);
  std::vector<std::size_t> batch(32);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  std::vector<LayerParams> grads;
  for (auto _ : state) {
    benchmark::DoNotOptimize(objective(net, view, batch, LossKind::CategoricalCrossEntropy,
                                       ForwardMode::Stochastic, 5, &grads));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainBatch)->Unit(benchmark::kMillisecond);

void BM_SafetyOracle(benchmark::State& state) {
  const Track track = resolve_track("figure8");
  const SimState s = start_state(track, SimConfig{}, 50.0);
  for (auto _ : state) benchmark::DoNotOptimize(safety_oracle(track, s, 3.0, OracleMode::Arc));
}
BENCHMARK(BM_SafetyOracle);

}  // namespace
BENCHMARK_MAIN();
