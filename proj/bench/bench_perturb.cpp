// Serial reference vs parallel perturbation sweep on the same context.

#include <benchmark/benchmark.h>

#include "pdml/datagen.hpp"
#include "pdml/perturb.hpp"

using namespace pdml;

namespace {

const PerturbationContext& context(PerturbPath path) {
    static const auto build = [](PerturbPath which) {
        SimSetting st;
        st.family = Family::F2;
        st.n = 1000;
        st.p = 200;
        st.s = 20;
        Rng data(1), sr(2), fr(3);
        const auto draw = gen_dataset(st, data);
        const FoldSplit sp = split(st.n, SplitScheme::cross_fit(2), sr);
        PerturbOptions popts;
        popts.fixed_ratio = 1.0;
        return which == PerturbPath::LinearLasso
                   ? PerturbationContext::linear(draw.data, sp, PenaltyConfig{}, popts, fr)
                   : PerturbationContext::general(draw.data, sp, LassoSpec{}, LassoSpec{},
                                                  popts, fr);
    };
    static const PerturbationContext general = build(PerturbPath::GeneralLearner);
    static const PerturbationContext linear = build(PerturbPath::LinearLasso);
    return path == PerturbPath::LinearLasso ? linear : general;
}

void BM_Serial(benchmark::State& state) {
    const auto& ctx = context(static_cast<PerturbPath>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(run_perturbations_serial(ctx, 64, 0.04, 11));
}

void BM_Parallel(benchmark::State& state) {
    const auto& ctx = context(static_cast<PerturbPath>(state.range(0)));
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state)
        benchmark::DoNotOptimize(run_perturbations(ctx, 64, 0.04, 11, workers));
}

}  // namespace

BENCHMARK(BM_Serial)
    ->Arg(static_cast<int>(PerturbPath::GeneralLearner))
    ->Arg(static_cast<int>(PerturbPath::LinearLasso))
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Parallel)
    ->ArgsProduct({{static_cast<int>(PerturbPath::GeneralLearner),
                    static_cast<int>(PerturbPath::LinearLasso)},
                   {1, 2, 4}})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
