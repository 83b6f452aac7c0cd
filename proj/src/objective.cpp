#include "coa/objective.hpp"

#include <cmath>

#include "coa/errors.hpp"
#include "coa/kernels.hpp"

namespace coa {

TCMBreakdown tcm_loss(const ModalityAwareEmbedding& f_adv,
                      const ModalityAwareEmbedding& f_ref,
                      const ModalityAwareEmbedding& f_clean,
                      double beta, double gamma) {
    if (f_adv.dim() != f_ref.dim() || f_adv.dim() != f_clean.dim())
        throw ShapeError("tcm_loss: embedding dimensions differ");
    // beta = 0 (no clean repulsion) is a legal degenerate evaluation even
    // though attack configs keep beta strictly inside (0, 1).
    if (beta < 0.0 || beta >= 1.0)
        throw InvalidConfigError("tcm_loss: beta must lie in [0, 1)");
    if (gamma < 0.0) throw InvalidConfigError("tcm_loss: gamma must be nonnegative");

    TCMBreakdown out;
    out.sim_target = kernels::dot(f_adv.values(), f_ref.values());
    out.sim_clean = kernels::dot(f_adv.values(), f_clean.values());
    out.loss = std::max(out.sim_target - beta * out.sim_clean + gamma, 0.0);
    out.active = out.loss > 0.0;
    return out;
}

namespace {

void check_context(const AttackStepContext& ctx) {
    if (!ctx.clean_image || !ctx.image_encoder || !ctx.caption_embedding || !ctx.f_ref ||
        !ctx.f_clean)
        throw InvalidConfigError("attack step context is incomplete");
    const auto dim = static_cast<std::size_t>(ctx.image_encoder->dim());
    if (ctx.caption_embedding->dim() != dim || ctx.f_ref->dim() != dim ||
        ctx.f_clean->dim() != dim)
        throw ShapeError("attack step context: embedding dimensions differ");
}

}  // namespace

TCMForward tcm_forward(const Perturbation& delta, const AttackStepContext& ctx) {
    check_context(ctx);
    ImageTensor adv = apply_perturbation(*ctx.clean_image, delta);
    RawEmbedding img_emb = ctx.image_encoder->encode(adv);
    ModalityAwareEmbedding f_adv =
        fuse_modalities(img_emb, *ctx.caption_embedding, ctx.alpha);
    TCMBreakdown breakdown = tcm_loss(f_adv, *ctx.f_ref, *ctx.f_clean, ctx.beta, ctx.gamma);
    return TCMForward{std::move(adv), std::move(f_adv), breakdown};
}

std::vector<double> tcm_gradient(const Perturbation& delta, const AttackStepContext& ctx) {
    check_context(ctx);
    auto vjp = ctx.image_encoder->vjp_handle();
    if (!vjp)
        throw CapabilityError("tcm_gradient: image encoder exposes no gradient access");

    const ImageTensor& clean = *ctx.clean_image;
    ImageTensor adv = apply_perturbation(clean, delta);
    const RawEmbedding img_emb = ctx.image_encoder->encode(adv);
    const std::size_t dim = img_emb.dim();

    std::vector<double> grad(clean.size(), 0.0);

    const double img_norm = kernels::l2_norm(img_emb.values);
    if (img_norm == 0.0) return grad;  // image branch contributes nothing here

    std::vector<double> img_unit(dim);
    for (std::size_t i = 0; i < dim; ++i) img_unit[i] = img_emb.values[i] / img_norm;

    // Blend before the final normalization: m = alpha*img_unit + (1-alpha)*txt_unit.
    std::vector<double> blend(dim, 0.0);
    const double txt_norm = kernels::l2_norm(ctx.caption_embedding->values);
    for (std::size_t i = 0; i < dim; ++i) {
        blend[i] = ctx.alpha * img_unit[i];
        if (txt_norm > 0.0)
            blend[i] += (1.0 - ctx.alpha) * ctx.caption_embedding->values[i] / txt_norm;
    }
    const double blend_norm = kernels::l2_norm(blend);
    if (blend_norm < 1e-12)
        throw DegenerateFusionError("tcm_gradient: fused embedding collapsed to zero");

    std::vector<double> f_adv(dim);
    for (std::size_t i = 0; i < dim; ++i) f_adv[i] = blend[i] / blend_norm;

    const double sim_target = kernels::dot(f_adv, ctx.f_ref->values());
    const double sim_clean = kernels::dot(f_adv, ctx.f_clean->values());
    if (sim_target - ctx.beta * sim_clean + ctx.gamma <= 0.0)
        return grad;  // hinge inactive: flat region

    // dL/dF_adv = f_ref - beta * f_clean.
    std::vector<double> d_fadv(dim);
    for (std::size_t i = 0; i < dim; ++i)
        d_fadv[i] = ctx.f_ref->values()[i] - ctx.beta * ctx.f_clean->values()[i];

    // Through F_adv = blend/|blend|: project out the f_adv component.
    const double proj_b = kernels::dot(d_fadv, f_adv);
    std::vector<double> d_blend(dim);
    for (std::size_t i = 0; i < dim; ++i)
        d_blend[i] = (d_fadv[i] - proj_b * f_adv[i]) / blend_norm;

    // Through the blend: image branch carries weight alpha.
    // Through img_unit = e/|e|: project out the unit-embedding component.
    std::vector<double> d_emb(dim);
    const double proj_e = kernels::dot(d_blend, img_unit);
    for (std::size_t i = 0; i < dim; ++i)
        d_emb[i] = ctx.alpha * (d_blend[i] - proj_e * img_unit[i]) / img_norm;

    grad = vjp->apply(adv, d_emb);
    if (grad.size() != clean.size())
        throw ShapeError("tcm_gradient: encoder VJP returned a mismatched gradient");

    // clamp(image + delta): zero outside the open interval (0, 1).
    const auto clean_px = clean.pixels();
    const auto delta_px = delta.delta();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double raw = clean_px[i] + delta_px[i];
        if (!(raw > 0.0 && raw < 1.0)) grad[i] = 0.0;
    }
    return grad;
}

}  // namespace coa
