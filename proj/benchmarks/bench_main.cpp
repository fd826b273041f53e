#include <benchmark/benchmark.h>

#include <random>

#include "mtpd/conflict.hpp"
#include "mtpd/dataset.hpp"
#include "mtpd/importance.hpp"
#include "mtpd/losses.hpp"
#include "mtpd/model.hpp"
#include "mtpd/ops.hpp"
#include "mtpd/pruner.hpp"

namespace {

using namespace mtpd;

Tensor uniform(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(shape);
    for (double& v : t.data()) v = u(rng);
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    const std::size_t c = static_cast<std::size_t>(state.range(0));
    const Tensor x = uniform({16, c, 32, 32}, 1), w = uniform({c, c, 3, 3}, 2), b = uniform({c}, 3);
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv2dForwardBackward(benchmark::State& state) {
    const std::size_t c = static_cast<std::size_t>(state.range(0));
    const Tensor x = uniform({16, c, 32, 32}, 1);
    Tensor w = uniform({c, c, 3, 3}, 2), b = uniform({c}, 3);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    for (auto _ : state) {
        ops::mean(ops::conv2d(x, w, b, 1, 1)).backward();
        w.zero_grad();
        b.zero_grad();
    }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
    const Model m = Model::initialize(ModelGraph::reference(), 1);
    const auto samples = generate_dataset(1, static_cast<std::size_t>(state.range(0)));
    const Batch batch = make_batch(samples);
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(m.forward(batch.images));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
    Model m = Model::initialize(ModelGraph::reference(), 1);
    const auto samples = generate_dataset(1, 16);
    const Batch batch = make_batch(samples);
    for (auto _ : state) {
        task_losses(m, batch).total().backward();
        for (auto& [name, p] : m.mutable_parameters()) p.zero_grad();
    }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_BuildPlan(benchmark::State& state) {
    const ModelGraph g = ModelGraph::reference();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1e-6);
    std::vector<ChannelStatistics> stats;
    for (const auto& id : g.prunable_layers()) {
        ChannelStatistics s(id, g.layer(id).out_channels);
        for (std::size_t t = 0; t < task_count; ++t) {
            for (std::size_t c = 0; c < s.channels; ++c) {
                s.importance[t][c] = u(rng) * u(rng);
                s.avg_grad[t][c] = n(rng);
            }
            s.positions[t] = s.sample_count[t] = 1;
        }
        stats.push_back(std::move(s));
    }
    std::vector<ConflictReport> conflicts;
    for (const auto& s : stats) conflicts.push_back(conflict_report(s, 1e-12));
    for (auto _ : state) benchmark::DoNotOptimize(build_plan(aggregate_importance(stats, 0.25), conflicts, {}));
}
BENCHMARK(BM_BuildPlan)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
