#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "oracles.hpp"

using namespace coa::oracles;

TEST_SUITE("oracles") {

TEST_CASE("finite differences are exact on a quadratic") {
    const auto f = [](const std::vector<double>& x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            acc += (1.0 + static_cast<double>(i)) * x[i] * x[i] + 0.5 * x[i];
        return acc;
    };
    const std::vector<double> x = {0.3, -0.2, 0.7};
    const auto grad = finite_difference_gradient(f, x, 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double expected = 2.0 * (1.0 + static_cast<double>(i)) * x[i] + 0.5;
        CHECK(grad[i] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("halving h shrinks the truncation error about fourfold") {
    const auto f = [](const std::vector<double>& x) { return std::exp(x[0]) * std::sin(x[0]); };
    const std::vector<double> x = {0.4};
    const double exact = std::exp(0.4) * (std::sin(0.4) + std::cos(0.4));

    const double err_h = std::abs(finite_difference_gradient(f, x, 1e-3)[0] - exact);
    const double err_h2 = std::abs(finite_difference_gradient(f, x, 5e-4)[0] - exact);
    CHECK(err_h / err_h2 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("toy instances are deterministic and hinge-active at zero") {
    const ToyInstance a = make_toy_instance(5);
    const ToyInstance b = make_toy_instance(5);
    CHECK(a.encoder_matrix == b.encoder_matrix);
    CHECK(a.clean_image == b.clean_image);
    CHECK(oracle_tcm_loss(a, std::vector<double>(a.n_pixels(), 0.0)) > 0.05);
}

TEST_CASE("n = 1: brute force picks the better of the two endpoints") {
    const ToyInstance inst = make_toy_instance(11, /*n_pixels=*/1);
    const double lo = oracle_tcm_loss(inst, {-inst.eps});
    const double hi = oracle_tcm_loss(inst, {+inst.eps});
    const CornerOptimum best = brute_force_linf_optimum(inst);
    CHECK(best.best_loss == std::max(lo, hi));
}

TEST_CASE("random interior points never beat the corner maximum") {
    const ToyInstance inst = make_toy_instance(17, 10);
    const CornerOptimum best = brute_force_linf_optimum(inst);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> inside(-inst.eps, inst.eps);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> delta(inst.n_pixels());
        for (auto& v : delta) v = inside(rng);
        CHECK(oracle_tcm_loss(inst, delta) <= best.best_loss + 1e-12);
    }
}

TEST_CASE("corner enumeration refuses more than 12 pixels") {
    ToyInstance inst = make_toy_instance(3, 12);
    inst.height = 13;
    inst.clean_image.resize(13, 0.5);
    inst.target_image.resize(13, 0.5);
    inst.encoder_matrix.resize(static_cast<std::size_t>(inst.dim) * 13, 0.0);
    CHECK_THROWS_AS(brute_force_linf_optimum(inst), std::invalid_argument);
    CHECK_THROWS_AS(make_toy_instance(1, 13), std::invalid_argument);
}

}  // TEST_SUITE
