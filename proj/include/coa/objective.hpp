#pragma once

#include <vector>

#include "coa/core.hpp"
#include "coa/fusion.hpp"
#include "coa/model_interfaces.hpp"

namespace coa {

// One evaluation of the targeted contrastive hinge.
struct TCMBreakdown {
    double loss = 0.0;        // max(sim_target - beta*sim_clean + gamma, 0)
    double sim_target = 0.0;  // cosine(f_adv, f_ref)
    double sim_clean = 0.0;   // cosine(f_adv, f_clean)
    bool active = false;      // hinge engaged (loss > 0)
};

// Hinge loss over unit embeddings; the optimizer ascends this value.
TCMBreakdown tcm_loss(const ModalityAwareEmbedding& f_adv,
                      const ModalityAwareEmbedding& f_ref,
                      const ModalityAwareEmbedding& f_clean,
                      double beta, double gamma);

// Everything a gradient step needs besides delta itself. The caption-branch
// text embedding is a per-step constant: captions are discrete, so the loss
// gradient flows only through the image encoder.
struct AttackStepContext {
    const ImageTensor* clean_image = nullptr;
    const ImageEncoder* image_encoder = nullptr;
    const RawEmbedding* caption_embedding = nullptr;  // raw E_t of the current caption
    const ModalityAwareEmbedding* f_ref = nullptr;
    const ModalityAwareEmbedding* f_clean = nullptr;
    double alpha = 0.5;
    double beta = 0.4;
    double gamma = 0.6;
};

// dL/d(delta) through clamp(image + delta) -> encode -> fuse -> hinge.
// Zero where the hinge is inactive; zero on pixels clamped at the [0,1]
// bounds (clamp passes zero outside its active range).
std::vector<double> tcm_gradient(const Perturbation& delta, const AttackStepContext& ctx);

// Forward pass shared by the gradient and the chain loop: fused adversarial
// embedding plus the loss breakdown at a given delta.
struct TCMForward {
    ImageTensor adv_image;
    ModalityAwareEmbedding f_adv;
    TCMBreakdown breakdown;
};
TCMForward tcm_forward(const Perturbation& delta, const AttackStepContext& ctx);

}  // namespace coa
