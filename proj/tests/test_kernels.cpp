#include "doctest.h"

#include <cmath>
#include <vector>

#include "coa/kernels.hpp"
#include "coa/rng.hpp"

using namespace coa;

namespace {

std::vector<double> random_vec(std::size_t n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    kernels::serial::uniform_fill(v, lo, hi, seed);
    return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel kernels match the serial reference bit for bit") {
    for (const std::size_t n : {1ul, 7ul, 64ul, 1023ul, 4096ul}) {
        const auto image = random_vec(n, 11, 0.0, 1.0);
        const auto delta = random_vec(n, 22, -0.1, 0.1);
        const auto grad = random_vec(n, 33);

        std::vector<double> a(n), b(n);
        kernels::serial::add_clamp01(image, delta, a);
        kernels::omp::add_clamp01(image, delta, b);
        CHECK(a == b);

        kernels::serial::clamp_box(grad, 0.25, a);
        kernels::omp::clamp_box(grad, 0.25, b);
        CHECK(a == b);

        kernels::serial::sign_step_clamp(delta, grad, 0.01, 0.05, a);
        kernels::omp::sign_step_clamp(delta, grad, 0.01, 0.05, b);
        CHECK(a == b);

        kernels::serial::uniform_fill(a, -0.5, 0.5, 77);
        kernels::omp::uniform_fill(b, -0.5, 0.5, 77);
        CHECK(a == b);

        kernels::serial::gaussian_add_clamp01(image, 0.2, 99, a);
        kernels::omp::gaussian_add_clamp01(image, 0.2, 99, b);
        CHECK(a == b);

        CHECK(kernels::serial::max_abs(grad) == kernels::omp::max_abs(grad));
    }
}

TEST_CASE("matvec variants agree with each other and a hand case") {
    const std::size_t rows = 5, cols = 33;
    const auto m = random_vec(rows * cols, 3);
    const auto x = random_vec(cols, 4);
    const auto c = random_vec(rows, 5);

    std::vector<double> a(rows), b(rows);
    kernels::serial::matvec(m, x, a, rows, cols);
    kernels::omp::matvec(m, x, b, rows, cols);
    CHECK(a == b);

    std::vector<double> at(cols), bt(cols);
    kernels::serial::matvec_transpose(m, c, at, rows, cols);
    kernels::omp::matvec_transpose(m, c, bt, rows, cols);
    CHECK(at == bt);

    const std::vector<double> m2 = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> x2 = {10.0, 100.0};
    std::vector<double> y2(2);
    kernels::serial::matvec(m2, x2, y2, 2, 2);
    CHECK(y2[0] == 210.0);
    CHECK(y2[1] == 430.0);
    kernels::serial::matvec_transpose(m2, x2, y2, 2, 2);
    CHECK(y2[0] == 310.0);
    CHECK(y2[1] == 420.0);
}

TEST_CASE("uniform_fill is deterministic per seed and respects bounds") {
    std::vector<double> a(512), b(512);
    kernels::uniform_fill(a, -0.3, 0.3, 123);
    kernels::uniform_fill(b, -0.3, 0.3, 123);
    CHECK(a == b);
    for (double v : a) CHECK(std::abs(v) <= 0.3);

    kernels::uniform_fill(b, -0.3, 0.3, 124);
    CHECK(a != b);
}

TEST_CASE("sign_step_clamp treats zero gradient as a null step") {
    // dyadic values so the arithmetic is exact
    const std::vector<double> delta = {0.25, -0.5, 0.375};
    const std::vector<double> grad = {0.0, 5.0, -5.0};
    std::vector<double> out(3);
    kernels::serial::sign_step_clamp(delta, grad, 0.125, 0.4375, out);
    CHECK(out[0] == 0.25);    // zero gradient: untouched
    CHECK(out[1] == -0.375);  // -0.5 + 0.125
    CHECK(out[2] == 0.25);    // 0.375 - 0.125, inside the bound
}

TEST_CASE("sign_step_clamp saturates at the bound") {
    const std::vector<double> delta = {0.049, -0.049};
    const std::vector<double> grad = {1.0, -1.0};
    std::vector<double> out(2);
    kernels::serial::sign_step_clamp(delta, grad, 0.01, 0.05, out);
    CHECK(out[0] == 0.05);
    CHECK(out[1] == -0.05);
}

TEST_CASE("backend dispatch honors the active backend") {
    const auto saved = kernels::active_backend();
    kernels::set_backend(kernels::Backend::Serial);
    CHECK(kernels::active_backend() == kernels::Backend::Serial);
    std::vector<double> a(64), b(64);
    kernels::uniform_fill(a, 0.0, 1.0, 5);
    kernels::set_backend(kernels::Backend::Parallel);
    kernels::uniform_fill(b, 0.0, 1.0, 5);
    CHECK(a == b);  // counter-based draws are backend-independent
    kernels::set_backend(saved);
}

TEST_CASE("dot and l2_norm hand cases") {
    const std::vector<double> a = {3.0, 4.0};
    CHECK(kernels::l2_norm(a) == 5.0);
    const std::vector<double> b = {1.0, -1.0};
    CHECK(kernels::dot(a, b) == -1.0);
}

}  // TEST_SUITE
