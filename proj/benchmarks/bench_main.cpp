#include <random>

#include <benchmark/benchmark.h>

#include "motiondiff/dataset.hpp"
#include "motiondiff/evaluation.hpp"
#include "motiondiff/sampler.hpp"
#include "motiondiff/trainer.hpp"

using namespace motiondiff;

namespace {

const Dataset& data() {
    static const Dataset d = make_synthetic_dataset(64, 3, 3, 1);
    return d;
}

TrainingState desk_state() {
    TrainerConfig c = TrainerConfig::desk();
    c.seed = 1;
    return init_training(c, data());
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

void BM_DenoiserForward(benchmark::State& state) {
    const TrainingState s = desk_state();
    const int batch = static_cast<int>(state.range(0));
    const Matrix x = gaussian(batch * kClipFrames, s.denoiser_config.rot_channels, 2);
    const std::vector<int> steps(static_cast<std::size_t>(batch), 100), labels(static_cast<std::size_t>(batch), 1);
    for (auto _ : state) benchmark::DoNotOptimize(s.denoiser.denoise(x, steps, labels, labels, kClipFrames).eps_hat.data());
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// Forward, backward and both optimizer updates for one desk batch of 16.
void BM_TrainStep(benchmark::State& state) {
    TrainingState s = desk_state();
    const NoiseSchedule sched = s.config.schedule();
    for (auto _ : state) benchmark::DoNotOptimize(train_step(s, data().clips, sched).total);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_SampleChain(benchmark::State& state) {
    const TrainingState s = desk_state();
    const int n = static_cast<int>(state.range(0));
    for (auto _ : state) {
        std::mt19937_64 rng(3);
        benchmark::DoNotOptimize(sample(s, 0, 0, n, rng).data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SampleChain)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
    const int dim = static_cast<int>(state.range(0));
    const FidStats a = compute_stats(gaussian(4 * dim, dim, 4));
    const FidStats b = compute_stats(gaussian(4 * dim, dim, 5));
    for (auto _ : state) benchmark::DoNotOptimize(fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(16)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
