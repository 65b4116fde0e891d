#include <benchmark/benchmark.h>

#include "irfs/metrics.hpp"
#include "irfs/rng.hpp"

using namespace irfs;

namespace {

Tensor random01(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
    return t;
}

Tensor random_mask(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    return t;
}

void BM_Mi(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(1);
    const Tensor a = random01({n, n}, rng), b = random01({n, n}, rng), f = random01({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::mi(a, b, f));
}
BENCHMARK(BM_Mi)->Arg(96)->Arg(352);

void BM_Vif(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(2);
    const Tensor a = random01({n, n}, rng), b = random01({n, n}, rng), f = random01({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::vif(a, b, f));
}
BENCHMARK(BM_Vif)->Arg(96)->Arg(352);

void BM_Cc(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(3);
    const Tensor a = random01({n, n}, rng), b = random01({n, n}, rng), f = random01({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::cc(a, b, f));
}
BENCHMARK(BM_Cc)->Arg(352);

void BM_SMeasure(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(4);
    const Tensor pred = random01({n, n}, rng);
    const Tensor gt = random_mask({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::s_measure(pred, gt));
}
BENCHMARK(BM_SMeasure)->Arg(96)->Arg(352);

void BM_EMeasure(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(5);
    const Tensor pred = random01({n, n}, rng);
    const Tensor gt = random_mask({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::e_measure(pred, gt));
}
BENCHMARK(BM_EMeasure)->Arg(352);

} // namespace

BENCHMARK_MAIN();
