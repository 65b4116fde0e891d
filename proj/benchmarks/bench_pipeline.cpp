#include <benchmark/benchmark.h>

#include "irfs/fusion_net.hpp"
#include "irfs/losses.hpp"
#include "irfs/sod_net.hpp"

using namespace irfs;
using ag::Var;

namespace {

Tensor random01(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
    return t;
}

void BM_FusionForward(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(1);
    FusionNet net(FusionNetConfig{}, rng);
    const Var y = Var::constant(random01({1, n, n}, rng));
    const Var ir = Var::constant(random01({1, n, n}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(net.forward_y(y, ir).value().data());
}
BENCHMARK(BM_FusionForward)->Arg(96)->Arg(192);

void BM_SodForward(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(2);
    SodNet net(SodNetConfig{}, rng);
    const Var a = Var::constant(random01({3, n, n}, rng));
    const Var b = Var::constant(random01({3, n, n}, rng));
    const Var c = Var::constant(random01({3, n, n}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(a, b, c).final_map.value().data());
}
BENCHMARK(BM_SodForward)->Arg(64)->Arg(96);

void BM_SodTrainStep(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(3);
    SodNet net(SodNetConfig{}, rng);
    const Var a = Var::constant(random01({3, n, n}, rng));
    const Var b = Var::constant(random01({3, n, n}, rng));
    const Var c = Var::constant(random01({3, n, n}, rng));
    Tensor gt({n, n});
    for (int64_t i = 0; i < gt.numel(); ++i) gt[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    for (auto _ : state) {
        net.params().zero_grads();
        ag::backward(losses::sod_loss(net.forward(a, b, c), gt).total);
        benchmark::DoNotOptimize(net.params().items().front().second.grad().data());
    }
}
BENCHMARK(BM_SodTrainStep)->Arg(96);

void BM_MsSsim(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(4);
    const Var a = Var::constant(random01({1, n, n}, rng));
    const Var b = Var::constant(random01({1, n, n}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(losses::ms_ssim(a, b).scalar());
}
BENCHMARK(BM_MsSsim)->Arg(96)->Arg(352);

void BM_SaliencyMatrix(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(5);
    const Tensor img = random01({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(losses::saliency_matrix(img).data());
}
BENCHMARK(BM_SaliencyMatrix)->Arg(96)->Arg(352);

} // namespace
