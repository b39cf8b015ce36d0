#include <benchmark/benchmark.h>

#include "kle/flow.hpp"

namespace {

void BM_ForwardStepGolden(benchmark::State& state) {
    const kle::SlitConfig s({1.0}, {-1.0}, {1.0});
    const auto driver =
        kle::sample(kle::DriverSpec::dirac_const(0.0), kle::uniform_grid(1.0, 16));
    kle::SolveOptions opts;
    opts.rebuild_tol = state.range(0) == 0 ? 0.0 : 1e-3;
    for (auto _ : state) {
        kle::FlowStepper stepper(s, driver,
                                 {kle::SheetPoint::base({0.0, 2.0})},
                                 kle::Direction::forward, opts);
        stepper.advance(1.0); // one accepted adaptive step
        benchmark::DoNotOptimize(stepper.time());
    }
}
BENCHMARK(BM_ForwardStepGolden)->Arg(0)->Arg(1);

void BM_SlitOdeRhs(benchmark::State& state) {
    const kle::SlitConfig s({1.0, 1.5}, {-1.0, 0.3}, {1.0, 2.3});
    const auto nu = kle::BoundaryMeasure::dirac(0.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kle::slit_ode_rhs(nu, s, 24));
    }
}
BENCHMARK(BM_SlitOdeRhs);

} // namespace
