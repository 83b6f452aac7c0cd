#pragma once

#include <vector>

#include "coa/model_interfaces.hpp"

namespace coa {

// Unit-norm convex blend of an image and a text embedding.
class ModalityAwareEmbedding {
public:
    ModalityAwareEmbedding(std::vector<double> values, double alpha_used);

    std::span<const double> values() const { return values_; }
    double alpha_used() const { return alpha_used_; }
    std::size_t dim() const { return values_.size(); }

private:
    std::vector<double> values_;
    double alpha_used_;
};

// Normalizes each input to unit norm, blends alpha*img + (1-alpha)*txt, and
// renormalizes. A zero-norm raw input contributes nothing to the blend; a
// blend that collapses to zero (antipodal inputs at alpha = 0.5, or an
// all-zero active side) raises DegenerateFusionError.
ModalityAwareEmbedding fuse_modalities(const RawEmbedding& img_emb,
                                       const RawEmbedding& txt_emb, double alpha);

}  // namespace coa
