#include <benchmark/benchmark.h>

#include "irfs/autograd.hpp"
#include "irfs/nn.hpp"
#include "irfs/rng.hpp"

using namespace irfs;
using ag::Var;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
    const int64_t c = state.range(0), n = state.range(1);
    Rng rng(1);
    const Var x = Var::constant(random_tensor({c, n, n}, rng));
    const Var w = Var::constant(random_tensor({c, c, 3, 3}, rng));
    const Var b = Var::constant(random_tensor({c}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(ag::conv2d(x, w, b, 1, 1).value().data());
    state.SetItemsProcessed(state.iterations() * c * c * 9 * n * n);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 96})->Args({32, 48})->Args({64, 24});

void BM_Conv3x3Backward(benchmark::State& state) {
    const int64_t c = state.range(0), n = state.range(1);
    Rng rng(2);
    for (auto _ : state) {
        Var x = Var::leaf(random_tensor({c, n, n}, rng), true);
        Var w = Var::leaf(random_tensor({c, c, 3, 3}, rng), true);
        ag::backward(ag::mean(ag::conv2d(x, w, Var(), 1, 1)));
        benchmark::DoNotOptimize(w.grad().data());
    }
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 96})->Args({32, 48});

void BM_SigmoidAttention(benchmark::State& state) {
    const int64_t tokens = state.range(0), c = state.range(1);
    Rng rng(3);
    const Var q = Var::constant(random_tensor({tokens, c}, rng));
    const Var k = Var::constant(random_tensor({tokens, c}, rng));
    const Var v = Var::constant(random_tensor({tokens, c}, rng));
    const double scale = 1.0 / std::sqrt(double(c));
    for (auto _ : state)
        benchmark::DoNotOptimize(ag::attention_sigmoid(q, k, v, scale).value().data());
    state.SetItemsProcessed(state.iterations() * tokens * tokens * c * 2);
}
BENCHMARK(BM_SigmoidAttention)->Args({576, 32})->Args({2304, 16});

void BM_AttentionBackward(benchmark::State& state) {
    const int64_t tokens = state.range(0), c = state.range(1);
    Rng rng(4);
    const double scale = 1.0 / std::sqrt(double(c));
    for (auto _ : state) {
        Var q = Var::leaf(random_tensor({tokens, c}, rng), true);
        Var k = Var::leaf(random_tensor({tokens, c}, rng), true);
        Var v = Var::leaf(random_tensor({tokens, c}, rng), true);
        ag::backward(ag::mean(ag::attention_sigmoid(q, k, v, scale)));
        benchmark::DoNotOptimize(q.grad().data());
    }
}
BENCHMARK(BM_AttentionBackward)->Args({576, 32})->Args({2304, 16});

void BM_UpsampleBilinear(benchmark::State& state) {
    Rng rng(5);
    const Var x = Var::constant(random_tensor({32, 48, 48}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(ag::upsample_bilinear(x, 96, 96).value().data());
}
BENCHMARK(BM_UpsampleBilinear);

void BM_AdamStep(benchmark::State& state) {
    Rng rng(6);
    Var p = Var::leaf(random_tensor({256, 256}, rng), true);
    nn::Adam opt({p}, 1e-3);
    ag::backward(ag::mean(ag::mul(p, p)));
    for (auto _ : state) {
        opt.step();
        benchmark::DoNotOptimize(p.value().data());
    }
}
BENCHMARK(BM_AdamStep);

} // namespace
