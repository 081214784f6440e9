#include <benchmark/benchmark.h>

#include "gssl/model.hpp"
#include "gssl/ops.hpp"
#include "gssl/rng.hpp"

namespace {

gssl::Tensor random_tensor(gssl::Shape shape, std::uint64_t seed) {
    gssl::Rng rng(seed);
    std::vector<double> v(gssl::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return gssl::Tensor::from_vector(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_tensor({n, n}, 1);
    const auto b = random_tensor({n, n}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(gssl::ops::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv3x3Forward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({4, c, 16, 16}, 3);
    const auto w = random_tensor({c, c, 3, 3}, 4);
    const auto b = random_tensor({c}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(gssl::ops::conv2d(x, w, b, {1, 1}));
}
BENCHMARK(BM_Conv3x3Forward)->Arg(16)->Arg(32);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({4, c, 16, 16}, 3);
    auto w = random_tensor({c, c, 3, 3}, 4);
    w.set_requires_grad();
    const auto b = random_tensor({c}, 5);
    for (auto _ : state) {
        w.zero_grad();
        gssl::ops::sum(gssl::ops::conv2d(x, w, b, {1, 1})).backward();
    }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Arg(16)->Arg(32);

void BM_EncodeProject(benchmark::State& state) {
    gssl::ModelConfig cfg;
    cfg.encoder_width1 = 16;
    cfg.encoder_width2 = 32;
    cfg.feature_dim = 32;
    cfg.projection_hidden = 32;
    const auto m = gssl::init_model(cfg, 1);
    const auto x = random_tensor({4, 3, 32, 32}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(gssl::project(gssl::encode(x, m), m));
}
BENCHMARK(BM_EncodeProject);

}  // namespace
