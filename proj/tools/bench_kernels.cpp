// Serial vs OpenMP comparison for the data-parallel kernels plus one full
// attack step on the toy pipeline.

#include <benchmark/benchmark.h>

#include <vector>

#include "coa/core.hpp"
#include "coa/fusion.hpp"
#include "coa/kernels.hpp"
#include "coa/objective.hpp"
#include "coa/rng.hpp"
#include "coa/toy_backends.hpp"

namespace {

using namespace coa;

constexpr std::size_t kRows = 64;
constexpr std::size_t kCols = 64 * 64 * 3;

std::vector<double> random_vec(std::size_t n, uint64_t seed) {
    std::vector<double> v(n);
    kernels::serial::uniform_fill(v, -1.0, 1.0, seed);
    return v;
}

void BM_matvec_serial(benchmark::State& state) {
    const auto m = random_vec(kRows * kCols, 1);
    const auto x = random_vec(kCols, 2);
    std::vector<double> out(kRows);
    for (auto _ : state) {
        kernels::serial::matvec(m, x, out, kRows, kCols);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_matvec_serial);

void BM_matvec_omp(benchmark::State& state) {
    const auto m = random_vec(kRows * kCols, 1);
    const auto x = random_vec(kCols, 2);
    std::vector<double> out(kRows);
    for (auto _ : state) {
        kernels::omp::matvec(m, x, out, kRows, kCols);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_matvec_omp);

void BM_matvec_transpose_serial(benchmark::State& state) {
    const auto m = random_vec(kRows * kCols, 1);
    const auto c = random_vec(kRows, 3);
    std::vector<double> out(kCols);
    for (auto _ : state) {
        kernels::serial::matvec_transpose(m, c, out, kRows, kCols);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_matvec_transpose_serial);

void BM_matvec_transpose_omp(benchmark::State& state) {
    const auto m = random_vec(kRows * kCols, 1);
    const auto c = random_vec(kRows, 3);
    std::vector<double> out(kCols);
    for (auto _ : state) {
        kernels::omp::matvec_transpose(m, c, out, kRows, kCols);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_matvec_transpose_omp);

void BM_elementwise_serial(benchmark::State& state) {
    const auto img = random_vec(kCols, 4);
    const auto delta = random_vec(kCols, 5);
    std::vector<double> out(kCols);
    for (auto _ : state) {
        kernels::serial::add_clamp01(img, delta, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_elementwise_serial);

void BM_elementwise_omp(benchmark::State& state) {
    const auto img = random_vec(kCols, 4);
    const auto delta = random_vec(kCols, 5);
    std::vector<double> out(kCols);
    for (auto _ : state) {
        kernels::omp::add_clamp01(img, delta, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_elementwise_omp);

struct StepFixture {
    TensorShape shape{64, 64, 3};
    std::shared_ptr<ToyImageEncoder> encoder =
        std::make_shared<ToyImageEncoder>(64, shape, 99);
    ToyTextEncoder text{64, 0x5eed};
    ImageTensor clean = ImageTensor::generate(64, 64, 3, [](std::size_t i) {
        return 0.2 + 0.6 * unit_double(splitmix64(i));
    });
    RawEmbedding caption = text.encode("a bird perched on a branch");
    ModalityAwareEmbedding f_clean =
        fuse_modalities(encoder->encode(clean), caption, 0.5);
    ModalityAwareEmbedding f_ref =
        fuse_modalities(RawEmbedding{random_vec(64, 7)}, RawEmbedding{random_vec(64, 8)}, 0.5);
};

void BM_attack_step(benchmark::State& state) {
    StepFixture fx;
    kernels::set_backend(state.range(0) ? kernels::Backend::Parallel
                                        : kernels::Backend::Serial);
    AttackStepContext ctx;
    ctx.clean_image = &fx.clean;
    ctx.image_encoder = fx.encoder.get();
    ctx.caption_embedding = &fx.caption;
    ctx.f_ref = &fx.f_ref;
    ctx.f_clean = &fx.f_clean;

    Perturbation delta = init_perturbation(fx.shape, 8.0 / 255.0, 42);
    std::vector<double> next(delta.delta().size());
    for (auto _ : state) {
        const auto grad = tcm_gradient(delta, ctx);
        kernels::sign_step_clamp(delta.delta(), grad, 1.0 / 255.0, 8.0 / 255.0, next);
        benchmark::DoNotOptimize(next.data());
    }
    kernels::set_backend(kernels::Backend::Parallel);
}
BENCHMARK(BM_attack_step)->Arg(0)->Arg(1)->ArgNames({"omp"});

}  // namespace

BENCHMARK_MAIN();
