#include <benchmark/benchmark.h>

#include <vector>

#include "lutfuse/dataset.hpp"
#include "lutfuse/lut.hpp"
#include "lutfuse/metrics.hpp"
#include "lutfuse/networks.hpp"
#include "lutfuse/ops.hpp"

using namespace lutfuse;

namespace {

// Args: grid, width, height, threads.
void BM_ApplyLut(benchmark::State& state) {
    const auto lut = identity_lut(static_cast<int>(state.range(0)));
    const int w = static_cast<int>(state.range(1)), h = static_cast<int>(state.range(2));
    const auto image = gradient_image(h, w);
    ImageRgb out(h, w);
    for (auto _ : state) {
        apply_into(lut, image, out, static_cast<int>(state.range(3)));
        benchmark::DoNotOptimize(out.pixels().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w) * h);
}
BENCHMARK(BM_ApplyLut)
    ->Args({33, 1920, 1080, 1})
    ->Args({33, 3840, 2160, 1})
    ->Args({33, 3840, 2160, 0})
    ->Args({8, 1920, 1080, 1})
    ->Args({64, 1920, 1080, 1})
    ->Unit(benchmark::kMillisecond);

void BM_GenerateLut(benchmark::State& state) {
    nn::Student student;
    Rng rng(1);
    const auto stack = make_stack(procedural_scene(128, 128, 1), rng, 3);
    ad::Tensor latent;
    {
        ad::NoGradGuard guard;
        latent = nn::encode_latent(student, nn::stack_input(stack));
    }
    const int n = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(nn::generate_lut(student.inn, latent, n));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_GenerateLut)->Arg(17)->Arg(33)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_StudentForward(benchmark::State& state) {
    nn::Student student;
    Rng rng(2);
    const int side = static_cast<int>(state.range(1));
    const auto stack = make_stack(procedural_scene(side, side, 2), rng, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::student_forward(student, stack, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_StudentForward)->Args({32, 512})->Args({64, 512})->Unit(benchmark::kMillisecond);

void BM_Conv2d(benchmark::State& state) {
    const auto c = state.range(0);
    const auto input = ad::Tensor::full({1, c, 64, 64}, 0.5f);
    const auto weight = ad::Tensor::full({c, c, 3, 3}, 0.01f);
    const auto bias = ad::Tensor::zeros({c});
    ad::NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(input, weight, bias, 1, 1));
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
