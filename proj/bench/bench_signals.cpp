// Serial reference vs OpenMP kernels on a simulated multi-camera trace.
#include <benchmark/benchmark.h>

#include "paza/signal_kernels.hpp"
#include "paza/simulator.hpp"

namespace {

const std::vector<paza::FrameEvent>& trace() {
  static const std::vector<paza::FrameEvent> events = [] {
    paza::ScenarioConfig sc;
    sc.cameras = 4;
    sc.duration_s = 600;
    sc.arrival_rate_per_min = 6;
    sc.seed = 11;
    return paza::generate_trace(sc).events;
  }();
  return events;
}

void BM_SignalsSerial(benchmark::State& state) {
  const auto& events = trace();
  for (auto _ : state) benchmark::DoNotOptimize(paza::compute_signals_serial(events, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}

void BM_SignalsParallel(benchmark::State& state) {
  const auto& events = trace();
  for (auto _ : state) benchmark::DoNotOptimize(paza::compute_signals(events, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}

void BM_ProfileSerial(benchmark::State& state) {
  const auto& events = trace();
  for (auto _ : state) benchmark::DoNotOptimize(paza::profile_serial(events, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}

void BM_ProfileParallel(benchmark::State& state) {
  const auto& events = trace();
  for (auto _ : state) benchmark::DoNotOptimize(paza::profile(events, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}

}  // namespace

BENCHMARK(BM_SignalsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SignalsParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProfileSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProfileParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
