#include <benchmark/benchmark.h>

#include "gssl/metrics.hpp"
#include "gssl/rng.hpp"
#include "gssl/uncertainty.hpp"

namespace {

std::vector<gssl::PixelRecord> random_records(std::size_t n) {
    gssl::Rng rng(11);
    std::vector<gssl::PixelRecord> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i].accurate = rng.uniform() < 0.7;
        r[i].score = rng.uniform(-1.0, 1.0) - (r[i].accurate ? 0.3 : 0.0);
        r[i].image = static_cast<std::uint32_t>(i % 16);
    }
    return r;
}

void BM_Sweep(benchmark::State& state) {
    const auto records = random_records(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(gssl::sweep(records));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sweep)->Arg(1 << 12)->Arg(1 << 16);

void BM_Auroc(benchmark::State& state) {
    const auto records = random_records(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(gssl::auroc(records));
}
BENCHMARK(BM_Auroc)->Arg(1 << 16);

void BM_CalculateGamma(benchmark::State& state) {
    const std::size_t n = 8, k = 4, hw = static_cast<std::size_t>(state.range(0));
    gssl::Rng rng(12);
    std::vector<double> v(n * k * hw * hw);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    const auto scores = gssl::Tensor::from_vector({n, k, hw, hw}, std::move(v));
    gssl::PixelMask mask{n, hw, hw, std::vector<std::uint8_t>(n * hw * hw)};
    for (auto& m : mask.values) m = rng.uniform() < 0.6 ? 1 : 0;
    for (auto _ : state) benchmark::DoNotOptimize(gssl::calculate_gamma(mask, scores));
}
BENCHMARK(BM_CalculateGamma)->Arg(32)->Arg(64);

}  // namespace
