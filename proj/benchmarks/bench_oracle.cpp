#include <benchmark/benchmark.h>

#include "kle/oracle.hpp"

namespace {

void BM_WalkOnSpheres(benchmark::State& state) {
    const kle::SlitConfig s({1.0}, {-1.0}, {1.0});
    const int paths = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto est = kle::hit_probability(s, {0.0, 2.0}, 0, paths, 1);
        benchmark::DoNotOptimize(est.value);
    }
    state.SetItemsProcessed(state.iterations() * paths);
}
BENCHMARK(BM_WalkOnSpheres)->Arg(1000)->Arg(10000);

void BM_FdFactorize(benchmark::State& state) {
    const kle::SlitConfig s({1.0}, {-1.0}, {1.0});
    kle::FdGrid g;
    g.L = 16.0;
    g.H = 8.0;
    g.h = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) {
        kle::FdSolver solver(s, g);
        benchmark::DoNotOptimize(&solver);
    }
}
BENCHMARK(BM_FdFactorize)->Arg(10)->Arg(20);

} // namespace
