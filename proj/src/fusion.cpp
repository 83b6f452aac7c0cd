#include "coa/fusion.hpp"

#include <cmath>

#include "coa/errors.hpp"
#include "coa/kernels.hpp"

namespace coa {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

ModalityAwareEmbedding::ModalityAwareEmbedding(std::vector<double> values, double alpha_used)
    : values_(std::move(values)), alpha_used_(alpha_used) {
    const double norm = kernels::l2_norm(values_);
    if (std::abs(norm - 1.0) > 1e-6)
        throw InputError("modality-aware embedding must be unit norm");
}

ModalityAwareEmbedding fuse_modalities(const RawEmbedding& img_emb,
                                       const RawEmbedding& txt_emb, double alpha) {
    if (img_emb.dim() != txt_emb.dim())
        throw ShapeError("fuse_modalities: embedding dimensions differ");
    if (img_emb.dim() == 0) throw ShapeError("fuse_modalities: empty embeddings");
    if (alpha < 0.0 || alpha > 1.0)
        throw InvalidConfigError("fuse_modalities: alpha must lie in [0, 1]");

    const double img_norm = kernels::l2_norm(img_emb.values);
    const double txt_norm = kernels::l2_norm(txt_emb.values);

    std::vector<double> fused(img_emb.dim(), 0.0);
    if (img_norm > 0.0) {
        const double w = alpha / img_norm;
        for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += w * img_emb.values[i];
    }
    if (txt_norm > 0.0) {
        const double w = (1.0 - alpha) / txt_norm;
        for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += w * txt_emb.values[i];
    }

    const double norm = kernels::l2_norm(fused);
    if (norm < kDegenerateNorm)
        throw DegenerateFusionError("fused embedding collapsed to the zero vector");
    for (double& v : fused) v /= norm;
    return ModalityAwareEmbedding(std::move(fused), alpha);
}

}  // namespace coa
