// Microbenchmarks for the hot paths: tape matmul and convolution, generator
// batch evaluation, critic scoring, marching cubes, and the cloud metrics.
//
// Run: ./sdfgan_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include "sdfgan/discriminator.hpp"
#include "sdfgan/generator.hpp"
#include "sdfgan/metrics.hpp"
#include "sdfgan/rng.hpp"
#include "sdfgan/surfacing.hpp"
#include "sdfgan/tape.hpp"

using namespace sdfgan;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_TapeMatmul(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const int k = static_cast<int>(state.range(1));
    const int n = static_cast<int>(state.range(2));
    Rng rng(1);
    Tape t;
    const int a = t.constant(random_tensor({m, k}, rng));
    const int b = t.constant(random_tensor({k, n}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(t.matmul(a, b));
    state.SetItemsProcessed(state.iterations() * 2.0 * m * k * n);
}
BENCHMARK(BM_TapeMatmul)->Args({512, 131, 256})->Args({512, 256, 256})->Args({2048, 256, 512});

void BM_TapeConv3d(benchmark::State& state) {
    Rng rng(2);
    Tape t;
    const int x = t.constant(random_tensor({32, 8, 8, 8}, rng));
    const int w = t.constant(random_tensor({64, 32, 4, 4, 4}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(t.conv3d(x, w, 2, 1));
}
BENCHMARK(BM_TapeConv3d);

void BM_GeneratorForward(benchmark::State& state) {
    const int points = static_cast<int>(state.range(0));
    Rng rng(3);
    SdfGenerator gen{GeneratorConfig{}};
    gen.init_params(rng);
    const LatentCode z = sample_latent(rng, 128);
    PointBatch batch;
    batch.points.resize(points);
    for (auto& p : batch.points)
        p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    for (auto _ : state) benchmark::DoNotOptimize(gen.forward_batch(z, batch));
    state.SetItemsProcessed(state.iterations() * points);
}
BENCHMARK(BM_GeneratorForward)->Arg(512)->Arg(4096)->Arg(32768);

void BM_PointCriticScoreAndGrad(benchmark::State& state) {
    Rng rng(4);
    PointCritic critic;
    critic.init_params(rng);
    const Tensor input = random_tensor({512, 4}, rng);
    for (auto _ : state) {
        Tape t;
        auto nodes = critic.params().leaves_into(t);
        const int leaf = t.leaf(input);
        const int score = critic.score_on_tape(t, nodes, leaf);
        benchmark::DoNotOptimize(t.backward(score));
    }
}
BENCHMARK(BM_PointCriticScoreAndGrad);

void BM_MarchingCubesSphere(benchmark::State& state) {
    const int r = static_cast<int>(state.range(0));
    const SdfSource src = make_field_source(sphere_field({0, 0, 0}, 0.4));
    for (auto _ : state) benchmark::DoNotOptimize(marching_cubes(src, r));
}
BENCHMARK(BM_MarchingCubesSphere)->Arg(32)->Arg(64);

void BM_Chamfer2048(benchmark::State& state) {
    Rng rng(5);
    PointCloud a(2048), b(2048);
    for (auto& p : a) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (auto& p : b) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b));
}
BENCHMARK(BM_Chamfer2048);

void BM_EmdExact(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(6);
    PointCloud a(n), b(n);
    for (auto& p : a) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (auto& p : b) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (auto _ : state) benchmark::DoNotOptimize(emd(a, b, EmdMode::Exact));
}
BENCHMARK(BM_EmdExact)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
