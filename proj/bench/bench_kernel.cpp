#include <vector>

#include <benchmark/benchmark.h>

#include "fsqkd/channel.hpp"
#include "fsqkd/detection.hpp"
#include "fsqkd/kernel.hpp"
#include "fsqkd/tracking.hpp"

using namespace fsqkd;

namespace {

SourceConfig source_config() {
    SourceConfig s;
    s.mu_decoy = 0.1;
    s.bin_crosstalk = 0.005;
    return s;
}

ReceiverConfig receiver_config() {
    ReceiverConfig rx;
    rx.insertion_loss_db = 3.0;
    rx.imzi.insertion_loss_db = 1.0;
    rx.imzi.intrinsic_visibility = 0.94;
    return rx;
}

constexpr double kTransmittance = 0.02;

void reference_detect(benchmark::State& state) {
    const auto src = source_config();
    const auto rx = receiver_config();
    const auto n = static_cast<std::uint64_t>(state.range(0)) * 595'000;
    const auto slots = generate_pulse_train(n, src, 1);
    const std::vector<double> tr(n, kTransmittance);
    for (auto _ : state) {
        Rng rng(2);
        benchmark::DoNotOptimize(detect(slots, tr, src, rx, rng));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

void kernel(benchmark::State& state, Execution exec) {
    const PulseSource source(source_config(), 1);
    const auto rx = receiver_config();
    const std::vector<double> tr(static_cast<std::size_t>(state.range(0)), kTransmittance);
    for (auto _ : state) benchmark::DoNotOptimize(simulate_block(source, rx, {tr, 1e-3}, 2, exec));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 595'000);
}

void kernel_serial(benchmark::State& state) { kernel(state, Execution::kSerial); }
void kernel_parallel(benchmark::State& state) { kernel(state, Execution::kParallel); }

void tune(benchmark::State& state, Execution exec) {
    TurbulenceParams p;
    p.wander_std_m = 94.25e-6;
    p.wander_aspect = 0.52;
    Rng rng(3);
    const auto series = synthesize_turbulence(p, 10.0, 1e-3, rng);
    LoopConfig cfg;
    cfg.mirror.slew_rate_m_per_s = 50e-3;
    const GainGrid grid = default_gain_grid();
    for (auto _ : state) benchmark::DoNotOptimize(tune_gains(series, cfg, grid, 4, exec));
}

void tune_serial(benchmark::State& state) { tune(state, Execution::kSerial); }
void tune_parallel(benchmark::State& state) { tune(state, Execution::kParallel); }

}  // namespace

// Arguments are channel bins of 1 ms (595k slots each).
BENCHMARK(reference_detect)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(kernel_serial)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(kernel_parallel)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(tune_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(tune_parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
