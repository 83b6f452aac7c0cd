#include "oracles.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace coa::oracles {

namespace {

std::vector<double> normalized(const std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> out(v.size(), 0.0);
    if (norm == 0.0) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
    return out;
}

std::vector<double> encode(const ToyInstance& inst, const std::vector<double>& pixels) {
    std::vector<double> e(inst.dim, 0.0);
    for (int r = 0; r < inst.dim; ++r) {
        double acc = 0.0;
        for (int c = 0; c < inst.n_pixels(); ++c)
            acc += inst.encoder_matrix[static_cast<std::size_t>(r) * inst.n_pixels() + c] *
                   pixels[c];
        e[r] = acc;
    }
    return e;
}

std::vector<double> fuse(const ToyInstance& inst, const std::vector<double>& img_raw,
                         const std::vector<double>& txt_raw) {
    const auto img = normalized(img_raw);
    const auto txt = normalized(txt_raw);
    std::vector<double> blend(inst.dim);
    for (int i = 0; i < inst.dim; ++i)
        blend[i] = inst.alpha * img[i] + (1.0 - inst.alpha) * txt[i];
    return normalized(blend);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

ToyInstance make_toy_instance(uint64_t seed, int n_pixels, int dim) {
    if (n_pixels < 1 || n_pixels > 12)
        throw std::invalid_argument("toy instance pixel count must be in [1, 12]");

    for (uint64_t attempt = 0;; ++attempt) {
        std::mt19937_64 rng(seed * 1000003ull + attempt);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> interior(0.25, 0.75);

        ToyInstance inst;
        inst.height = n_pixels;
        inst.width = 1;
        inst.channels = 1;
        inst.dim = dim;
        inst.seed = seed;
        // Small budget keeps the normalized objective effectively linear over
        // the box, so the true optimum sits at a sign corner.
        inst.eps = 2.0 / 255.0;
        inst.encoder_matrix.resize(static_cast<std::size_t>(dim) * n_pixels);
        for (auto& v : inst.encoder_matrix) v = normal(rng);
        inst.clean_image.resize(n_pixels);
        for (auto& v : inst.clean_image) v = interior(rng);
        inst.target_image.resize(n_pixels);
        for (auto& v : inst.target_image) v = interior(rng);
        inst.clean_text_embedding.resize(dim);
        for (auto& v : inst.clean_text_embedding) v = normal(rng);
        inst.target_text_embedding.resize(dim);
        for (auto& v : inst.target_text_embedding) v = normal(rng);
        inst.caption_embedding.resize(dim);
        for (auto& v : inst.caption_embedding) v = normal(rng);

        const std::vector<double> zero(n_pixels, 0.0);
        if (oracle_tcm_loss(inst, zero) > 0.05) return inst;
    }
}

double oracle_tcm_loss(const ToyInstance& inst, const std::vector<double>& delta) {
    if (delta.size() != static_cast<std::size_t>(inst.n_pixels()))
        throw std::invalid_argument("oracle loss: delta size mismatch");

    std::vector<double> perturbed(inst.n_pixels());
    for (int i = 0; i < inst.n_pixels(); ++i) {
        double v = inst.clean_image[i] + delta[i];
        perturbed[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }

    const auto f_adv = fuse(inst, encode(inst, perturbed), inst.caption_embedding);
    const auto f_ref =
        fuse(inst, encode(inst, inst.target_image), inst.target_text_embedding);
    const auto f_clean =
        fuse(inst, encode(inst, inst.clean_image), inst.clean_text_embedding);

    const double margin =
        dot(f_adv, f_ref) - inst.beta * dot(f_adv, f_clean) + inst.gamma;
    return margin > 0.0 ? margin : 0.0;
}

CornerOptimum brute_force_linf_optimum(const ToyInstance& inst) {
    const int n = inst.n_pixels();
    if (n > 12)
        throw std::invalid_argument(
            "brute_force_linf_optimum: refusing more than 12 pixels (2^n corners)");

    CornerOptimum best;
    best.best_loss = -1.0;
    std::vector<double> corner(n);
    for (uint64_t mask = 0; mask < (1ull << n); ++mask) {
        for (int i = 0; i < n; ++i)
            corner[i] = (mask >> i) & 1 ? inst.eps : -inst.eps;
        const double loss = oracle_tcm_loss(inst, corner);
        if (loss > best.best_loss) {
            best.best_loss = loss;
            best.best_delta = corner;
        }
    }
    return best;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    const std::vector<double>& delta, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite differences need h > 0");
    std::vector<double> grad(delta.size());
    std::vector<double> probe = delta;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        probe[i] = delta[i] + h;
        const double up = loss_fn(probe);
        probe[i] = delta[i] - h;
        const double down = loss_fn(probe);
        probe[i] = delta[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace coa::oracles
