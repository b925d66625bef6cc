// Serial vs OpenMP matmul kernels, and batched classifier inference.

#include <benchmark/benchmark.h>

#include <vector>

#include "csd/classifiers/classifier.hpp"
#include "csd/classifiers/model.hpp"
#include "csd/numerics/kernels.hpp"
#include "csd/numerics/rng.hpp"

namespace {

using namespace csd;

std::vector<float> random_matrix(std::size_t n, std::uint64_t seed)
{
    num::SeededRng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const num::kernels::MatDims d{n, n, n};
    const auto a = random_matrix(n * n, 1), b = random_matrix(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel)
            num::kernels::parallel::matmul<float>(a, b, c, d);
        else
            num::kernels::serial::matmul<float>(a, b, c, d);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);

void BM_PredictBatch(benchmark::State& state)
{
    const auto family = static_cast<clf::Family>(state.range(0));
    const auto batch = static_cast<std::size_t>(state.range(1));
    const auto model = clf::build(clf::desk_preset(family, 30, 6), 1);
    const num::Tensor x({batch, 30, 6}, random_matrix(batch * 30 * 6, 3));
    for (auto _ : state) benchmark::DoNotOptimize(clf::predict_proba(model, x));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
    state.SetLabel(clf::to_string(family));
}
BENCHMARK(BM_PredictBatch)
    ->Name("predict_proba")
    ->ArgsProduct({{static_cast<long>(clf::Family::LSTM), static_cast<long>(clf::Family::GRU),
                    static_cast<long>(clf::Family::CNNLSTM)},
                   {1, 32, 256}})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
