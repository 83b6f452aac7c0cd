#include "coa/core.hpp"

#include <cmath>
#include <string>

#include "coa/errors.hpp"
#include "coa/kernels.hpp"
#include "coa/rng.hpp"

namespace coa {

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> pixels)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
    if (height <= 0 || width <= 0 || channels <= 0)
        throw ShapeError("image dimensions must be positive");
    if (pixels_.size() != static_cast<std::size_t>(height) * width * channels)
        throw ShapeError("pixel buffer size does not match image shape");
    for (double v : pixels_) {
        if (!(v >= 0.0 && v <= 1.0))
            throw InputError("pixel value outside [0, 1]: " + std::to_string(v));
    }
}

ImageTensor ImageTensor::zeros(int height, int width, int channels) {
    return ImageTensor(height, width, channels,
                       std::vector<double>(static_cast<std::size_t>(height) * width * channels, 0.0));
}

Perturbation::Perturbation(TensorShape shape, double budget_eps, std::vector<double> delta)
    : shape_(shape), budget_eps_(budget_eps), delta_(std::move(delta)) {
    if (budget_eps_ < 0.0)
        throw InvalidConfigError("perturbation budget must be nonnegative");
    if (delta_.size() != shape_.size())
        throw ShapeError("delta buffer size does not match shape");
    for (double v : delta_) {
        if (!(std::abs(v) <= budget_eps_))
            throw InvalidConfigError("delta exceeds its L-inf budget");
    }
}

double Perturbation::linf_norm() const { return kernels::max_abs(delta_); }

void AttackConfig::validate() const {
    if (eps < 0.0) throw InvalidConfigError("attack.eps must be nonnegative");
    if (step_size_eta <= 0.0)
        throw InvalidConfigError("attack.step_size_eta must be positive");
    // eta <= eps only makes sense for a nonzero budget; a zero-budget run is
    // legal and the projection pins delta to zero regardless of eta.
    if (eps > 0.0 && step_size_eta > eps)
        throw InvalidConfigError("attack.step_size_eta must not exceed attack.eps");
    if (pgd_steps < 0) throw InvalidConfigError("attack.pgd_steps must be nonnegative");
    if (alpha < 0.0 || alpha > 1.0)
        throw InvalidConfigError("attack.alpha must lie in [0, 1]");
    if (beta <= 0.0 || beta >= 1.0)
        throw InvalidConfigError("attack.beta must lie in (0, 1)");
    if (gamma < 0.0) throw InvalidConfigError("attack.gamma must be nonnegative");
    if (caption_refresh_interval <= 0)
        throw InvalidConfigError("attack.caption_refresh_interval must be positive");
}

Perturbation init_perturbation(TensorShape shape, double eps, uint64_t seed) {
    if (eps < 0.0) throw InvalidConfigError("init_perturbation: eps must be nonnegative");
    std::vector<double> delta(shape.size(), 0.0);
    if (eps > 0.0) kernels::uniform_fill(delta, -eps, eps, seed);
    return Perturbation(shape, eps, std::move(delta));
}

Perturbation project_linf(const Perturbation& delta, double eps) {
    if (eps < 0.0) throw InvalidConfigError("project_linf: eps must be nonnegative");
    std::vector<double> out(delta.delta().size());
    kernels::clamp_box(delta.delta(), eps, out);
    return Perturbation(delta.shape(), eps, std::move(out));
}

ImageTensor apply_perturbation(const ImageTensor& image, const Perturbation& delta) {
    if (shape_of(image) != delta.shape())
        throw ShapeError("apply_perturbation: image and delta shapes differ");
    std::vector<double> out(image.size());
    kernels::add_clamp01(image.pixels(), delta.delta(), out);
    return ImageTensor(image.height(), image.width(), image.channels(), std::move(out));
}

}  // namespace coa
