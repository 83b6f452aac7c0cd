#pragma once

#include <memory>
#include <string>
#include <vector>

#include "coa/model_interfaces.hpp"

namespace coa {

// Canonical text form used by every toy backend: surrounding whitespace
// trimmed, internal whitespace runs collapsed to one space.
std::string canonicalize_text(const std::string& text);

// Linear projection encoder: embedding = W * pixels with W drawn once from a
// seeded normal law. Rows are shifted to zero sum, so a constant brightness
// change does not move the embedding and encode(0) == 0 exactly.
class ToyImageEncoder : public ImageEncoder {
public:
    ToyImageEncoder(int dim, TensorShape input_shape, uint64_t seed);
    ToyImageEncoder(int dim, TensorShape input_shape, std::vector<double> matrix);

    int dim() const override { return dim_; }
    std::string name() const override { return "toy-image-encoder"; }
    RawEmbedding encode(const ImageTensor& image) const override;
    std::optional<VJPHandle> vjp_handle() const override;

    const TensorShape& input_shape() const { return input_shape_; }
    std::span<const double> matrix() const { return matrix_; }

private:
    int dim_;
    TensorShape input_shape_;
    std::vector<double> matrix_;  // dim_ x npixels, row-major
};

// Feature-hashing text encoder: each whitespace token lands in a signed
// bucket keyed by its hash, so identical token multisets map identically and
// token-disjoint texts can be exactly orthogonal.
class ToyTextEncoder : public TextEncoder {
public:
    ToyTextEncoder(int dim, uint64_t salt, std::string label = "toy-text-encoder");

    int dim() const override { return dim_; }
    std::string name() const override { return label_; }
    RawEmbedding encode(const std::string& text) const override;

    // Bucket index a single token lands in; exposed so tests can build
    // orthogonal-by-construction texts.
    int bucket_of(const std::string& token) const;

private:
    int dim_;
    uint64_t salt_;
    std::string label_;
};

// Renders a mid-gray image carrying a low-amplitude pixel pattern aligned
// with a text-keyed embedding direction plus seeded noise. Deterministic per
// (text, seed); the paired ToyImageEncoder sees the pattern clearly.
class ToyTextToImage : public TextToImage {
public:
    ToyTextToImage(std::shared_ptr<const ToyImageEncoder> encoder,
                   double signal_amplitude = 0.35, double noise_amplitude = 0.03);

    std::string name() const override { return "toy-text-to-image"; }
    ImageTensor generate(const std::string& text, uint64_t seed) const override;

    // Unit embedding-space direction a given text is keyed to.
    std::vector<double> text_direction(const std::string& text) const;

private:
    std::shared_ptr<const ToyImageEncoder> encoder_;
    double signal_amplitude_;
    double noise_amplitude_;
};

// Nearest-anchor captioner over a fixed caption codebook. Anchors are the
// encoder embeddings of canonical renders of each codebook caption.
class ToyCaptioner : public Captioner {
public:
    ToyCaptioner(std::shared_ptr<const ToyImageEncoder> encoder,
                 std::shared_ptr<const ToyTextToImage> renderer,
                 std::vector<std::string> codebook, uint64_t anchor_seed = 0);

    std::string name() const override { return "toy-captioner"; }
    std::string caption(const ImageTensor& image) const override;

    const std::vector<std::string>& codebook() const { return codebook_; }
    // Index of the codebook entry an image maps to.
    int nearest_index(const ImageTensor& image) const;

private:
    std::shared_ptr<const ToyImageEncoder> encoder_;
    std::vector<std::string> codebook_;
    std::vector<std::vector<double>> anchors_;  // unit vectors
};

// Black-box stand-in: answers any prompt with the wrapped captioner's output.
class ToyVictim : public Victim {
public:
    explicit ToyVictim(std::shared_ptr<const Captioner> captioner);

    std::string name() const override { return "toy-victim"; }
    std::string respond(const ImageTensor& image, const std::string& prompt) const override;

private:
    std::shared_ptr<const Captioner> captioner_;
};

// Deterministic three-level judge on hashed-token cosine similarity:
// generated close to target -> 1; otherwise unrelated to clean -> 0.5;
// otherwise -> 0.
class RuleBasedJudge : public Judge {
public:
    RuleBasedJudge(std::shared_ptr<const TextEncoder> encoder,
                   double target_threshold = 0.7, double clean_threshold = 0.5);

    std::string name() const override { return "rule-based-judge"; }
    JudgeVerdict judge(const std::string& clean_text, const std::string& generated_text,
                       const std::string& target_text) const override;

private:
    std::shared_ptr<const TextEncoder> encoder_;
    double target_threshold_;
    double clean_threshold_;
};

// Stopword-dropping key-information rule used as the offline extractor.
// Falls back to the canonicalized input when everything would be dropped.
std::string toy_extract_key_info(const std::string& text);

}  // namespace coa
