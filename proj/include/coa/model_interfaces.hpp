#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coa/image.hpp"

namespace coa {

// Encoder output before any normalization. Fixed dimension per encoder.
struct RawEmbedding {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

// Vector-Jacobian product access: for an image x and cotangent c, returns
// d<encoder(x), c>/dx with the same layout as the image pixels.
struct VJPHandle {
    std::function<std::vector<double>(const ImageTensor&, std::span<const double>)> apply;
};

// Three-level judgment: 1 target hit, 0.5 fooled only, 0 failed.
class JudgeVerdict {
public:
    JudgeVerdict(double score, std::string rationale);

    double score() const { return score_; }
    const std::string& rationale() const { return rationale_; }

private:
    double score_;
    std::string rationale_;
};

// All backends report how many concurrent calls they tolerate; 0 means
// unlimited. The batch runner clamps its worker pool accordingly.
class BackendBase {
public:
    virtual ~BackendBase() = default;
    virtual int max_concurrency() const { return 0; }
    virtual std::string name() const = 0;
};

class ImageEncoder : public BackendBase {
public:
    virtual int dim() const = 0;
    virtual RawEmbedding encode(const ImageTensor& image) const = 0;
    // Absent when the backend cannot expose gradients.
    virtual std::optional<VJPHandle> vjp_handle() const { return std::nullopt; }
};

class TextEncoder : public BackendBase {
public:
    virtual int dim() const = 0;
    virtual RawEmbedding encode(const std::string& text) const = 0;
};

class Captioner : public BackendBase {
public:
    virtual std::string caption(const ImageTensor& image) const = 0;
};

class TextToImage : public BackendBase {
public:
    virtual ImageTensor generate(const std::string& text, uint64_t seed) const = 0;
};

class Victim : public BackendBase {
public:
    virtual std::string respond(const ImageTensor& image, const std::string& prompt) const = 0;
};

class Judge : public BackendBase {
public:
    virtual JudgeVerdict judge(const std::string& clean_text,
                               const std::string& generated_text,
                               const std::string& target_text) const = 0;
};

// Plain completion backend shared by the LLM judge and the key-info
// extractor.
class LlmClient : public BackendBase {
public:
    virtual std::string complete(const std::string& system_prompt,
                                 const std::string& user_prompt) const = 0;
};

}  // namespace coa
