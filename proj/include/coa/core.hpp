#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coa/image.hpp"

namespace coa {

// L-infinity bounded pixel perturbation. The bound holds at construction and
// stays true for every value handed out.
class Perturbation {
public:
    Perturbation(TensorShape shape, double budget_eps, std::vector<double> delta);

    const TensorShape& shape() const { return shape_; }
    double budget_eps() const { return budget_eps_; }
    std::span<const double> delta() const { return delta_; }
    double linf_norm() const;

private:
    TensorShape shape_;
    double budget_eps_;
    std::vector<double> delta_;
};

// Attack hyperparameters. eps/eta are on the [0,1] pixel scale, so the
// conventional 8-step budget on a 0-255 scale is 8.0/255.
struct AttackConfig {
    double eps = 8.0 / 255.0;
    double step_size_eta = 1.0 / 255.0;
    int pgd_steps = 100;
    // Defaults tuned for the shipped toy backends, whose embeddings are
    // isotropic: with beta >= 0.5 and gamma = 1 - beta the hinge starts
    // inactive (sim_clean ~ 1, sim_target ~ 0) and ascent never engages.
    double alpha = 0.5;           // modality balance: 1 = image only
    double beta = 0.4;            // clean-pair repulsion weight
    double gamma = 1.0 - 0.4;     // hinge margin, defaults to 1 - beta
    int caption_refresh_interval = 1;
    uint64_t rng_seed = 0;

    // Throws InvalidConfigError listing the first violated constraint.
    void validate() const;
};

// delta_i ~ Uniform(-eps, eps), i.i.d., deterministic per seed. eps == 0 is
// the degenerate interval and yields all zeros; negative eps is rejected.
Perturbation init_perturbation(TensorShape shape, double eps, uint64_t seed);

// Componentwise clamp of delta into [-eps, eps]. Idempotent.
Perturbation project_linf(const Perturbation& delta, double eps);

// clamp(image + delta, 0, 1) as a new tensor; the input is untouched.
ImageTensor apply_perturbation(const ImageTensor& image, const Perturbation& delta);

}  // namespace coa
