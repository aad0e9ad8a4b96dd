// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include "cdrforge/feature_engine.hpp"
#include "cdrforge/learn.hpp"
#include "cdrforge/synth_gen.hpp"

using namespace cdrforge;

namespace {

struct Data {
    std::vector<CdrRecord> cdr;
    FeatureMatrix features;
    LabeledData train;
};

const Data& data() {
    static const Data d = [] {
        auto profile = builtin_profile("ghana");
        TimeWindows w;
        w.training_start = *parse_iso8601("2024-01-01T00:00:00Z");
        auto pop = generate_population(profile, 2000);
        CdrOptions o;
        o.start = w.training_start;
        Data out;
        out.cdr = generate_cdr(pop, w.training_days, profile, o);
        out.features = featurize(out.cdr, TaxonomyConfig{});
        auto labels = assign_labels(observed_subscribers(out.cdr), generate_mmtr(pop, w, profile), w,
                                    Mode::lenient).labels;
        auto sample = stratified_sample(labels, 250, 1);
        auto split = split_train_test(sample, Task::voice_vs_active, 0.2, 2);
        out.train = make_task_data(out.features, split.train, labels, Task::voice_vs_active);
        return out;
    }();
    return d;
}

Execution mode(const benchmark::State& state) {
    return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void BM_featurize(benchmark::State& state) {
    const auto& d = data();
    for (auto _ : state)
        benchmark::DoNotOptimize(featurize(d.cdr, TaxonomyConfig{}, mode(state)));
    state.SetLabel(state.range(0) == 0 ? "serial" : "openmp");
}

void BM_train_gbdt(benchmark::State& state) {
    const auto& d = data();
    GbdtParams p;
    p.n_trees = 20;
    for (auto _ : state)
        benchmark::DoNotOptimize(train_gbdt(d.train.x, d.train.y, p, mode(state)));
    state.SetLabel(state.range(0) == 0 ? "serial" : "openmp");
}

void BM_rank_all_features(benchmark::State& state) {
    const auto& d = data();
    for (auto _ : state)
        benchmark::DoNotOptimize(rank_all_features(d.train.x, d.train.y, mode(state)));
    state.SetLabel(state.range(0) == 0 ? "serial" : "openmp");
}

} // namespace

BENCHMARK(BM_featurize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_gbdt)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rank_all_features)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
