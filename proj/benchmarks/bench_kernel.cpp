#include <benchmark/benchmark.h>

#include "kle/kernel.hpp"

namespace {

kle::SlitConfig golden() { return kle::SlitConfig({1.0}, {-1.0}, {1.0}); }

void BM_WorkspaceBuild(benchmark::State& state) {
    const auto s = golden();
    const int degree = static_cast<int>(state.range(0));
    for (auto _ : state) {
        kle::KernelWorkspace ws(s, degree);
        benchmark::DoNotOptimize(ws.collocation_count());
    }
}
BENCHMARK(BM_WorkspaceBuild)->Arg(16)->Arg(24)->Arg(32);

void BM_ModelSolve(benchmark::State& state) {
    kle::KernelWorkspace ws(golden(), static_cast<int>(state.range(0)));
    double xi = 0.0;
    for (auto _ : state) {
        auto m = ws.build(xi, -1.0);
        benchmark::DoNotOptimize(m.slit_levels(0));
        xi += 1e-6; // defeat trivial caching
    }
}
BENCHMARK(BM_ModelSolve)->Arg(16)->Arg(24)->Arg(32);

void BM_EvalPsi(benchmark::State& state) {
    kle::KernelWorkspace ws(golden(), 24);
    const auto m = ws.build(0.0, 1e-8);
    kle::Complex z(0.3, 2.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kle::eval_psi(m, z));
        z += kle::Complex(1e-9, 0.0);
    }
}
BENCHMARK(BM_EvalPsi);

} // namespace

BENCHMARK_MAIN();
