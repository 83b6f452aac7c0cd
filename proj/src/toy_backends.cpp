#include "coa/toy_backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "coa/errors.hpp"
#include "coa/kernels.hpp"
#include "coa/rng.hpp"

namespace coa {

namespace {

double gaussian_from(uint64_t seed, uint64_t index) {
    const uint64_t h1 = splitmix64(splitmix64(seed) ^ (2 * index + 1));
    const uint64_t h2 = splitmix64(splitmix64(seed) ^ (2 * index + 2));
    const double u1 = std::max(unit_double(h1), 0x1.0p-60);
    const double u2 = unit_double(h2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::string> tokenize(const std::string& canonical) {
    std::vector<std::string> tokens;
    std::istringstream in(canonical);
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = kernels::l2_norm(a);
    const double nb = kernels::l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return kernels::dot(a, b) / (na * nb);
}

}  // namespace

std::string canonicalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = true;  // swallow leading whitespace
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            out.push_back(static_cast<char>(c));
            in_space = false;
        }
    }
    return out;
}

ToyImageEncoder::ToyImageEncoder(int dim, TensorShape input_shape, uint64_t seed)
    : dim_(dim), input_shape_(input_shape) {
    if (dim <= 0) throw InvalidConfigError("toy image encoder dim must be positive");
    const std::size_t n = input_shape_.size();
    if (n == 0) throw ShapeError("toy image encoder needs a nonempty input shape");
    matrix_.resize(static_cast<std::size_t>(dim) * n);
    for (int r = 0; r < dim; ++r) {
        double row_sum = 0.0;
        double* row = matrix_.data() + static_cast<std::size_t>(r) * n;
        for (std::size_t c = 0; c < n; ++c) {
            row[c] = gaussian_from(seed + static_cast<uint64_t>(r), c);
            row_sum += row[c];
        }
        const double mean = row_sum / static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) row[c] -= mean;
    }
}

ToyImageEncoder::ToyImageEncoder(int dim, TensorShape input_shape, std::vector<double> matrix)
    : dim_(dim), input_shape_(input_shape), matrix_(std::move(matrix)) {
    if (dim <= 0) throw InvalidConfigError("toy image encoder dim must be positive");
    if (matrix_.size() != static_cast<std::size_t>(dim) * input_shape_.size())
        throw ShapeError("toy image encoder matrix size does not match dim x pixels");
}

RawEmbedding ToyImageEncoder::encode(const ImageTensor& image) const {
    if (shape_of(image) != input_shape_)
        throw ShapeError("toy image encoder: unexpected input shape");
    RawEmbedding emb;
    emb.values.resize(dim_);
    kernels::matvec(matrix_, image.pixels(), emb.values, dim_, input_shape_.size());
    return emb;
}

std::optional<VJPHandle> ToyImageEncoder::vjp_handle() const {
    VJPHandle handle;
    handle.apply = [this](const ImageTensor& image, std::span<const double> cotangent) {
        if (shape_of(image) != input_shape_)
            throw ShapeError("toy image encoder vjp: unexpected input shape");
        if (cotangent.size() != static_cast<std::size_t>(dim_))
            throw ShapeError("toy image encoder vjp: cotangent dimension mismatch");
        std::vector<double> grad(input_shape_.size());
        kernels::matvec_transpose(matrix_, cotangent, grad, dim_, input_shape_.size());
        return grad;
    };
    return handle;
}

ToyTextEncoder::ToyTextEncoder(int dim, uint64_t salt, std::string label)
    : dim_(dim), salt_(salt), label_(std::move(label)) {
    if (dim <= 0) throw InvalidConfigError("toy text encoder dim must be positive");
}

int ToyTextEncoder::bucket_of(const std::string& token) const {
    const uint64_t h = splitmix64(fnv1a64(token) ^ salt_);
    return static_cast<int>(h % static_cast<uint64_t>(dim_));
}

RawEmbedding ToyTextEncoder::encode(const std::string& text) const {
    const std::string canonical = canonicalize_text(text);
    if (canonical.empty()) throw InputError("text encoder: empty text");
    RawEmbedding emb;
    emb.values.assign(dim_, 0.0);
    for (const auto& tok : tokenize(canonical)) {
        const uint64_t h = splitmix64(fnv1a64(tok) ^ salt_);
        const int idx = static_cast<int>(h % static_cast<uint64_t>(dim_));
        const double sign = (h >> 63) ? 1.0 : -1.0;
        emb.values[idx] += sign;
    }
    return emb;
}

ToyTextToImage::ToyTextToImage(std::shared_ptr<const ToyImageEncoder> encoder,
                               double signal_amplitude, double noise_amplitude)
    : encoder_(std::move(encoder)),
      signal_amplitude_(signal_amplitude),
      noise_amplitude_(noise_amplitude) {
    if (!encoder_) throw InvalidConfigError("toy text-to-image needs an encoder");
}

std::vector<double> ToyTextToImage::text_direction(const std::string& text) const {
    const std::string canonical = canonicalize_text(text);
    if (canonical.empty()) throw InputError("text-to-image: empty text");
    const uint64_t key = fnv1a64(canonical);
    std::vector<double> dir(encoder_->dim());
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = gaussian_from(key, i);
    const double norm = kernels::l2_norm(dir);
    for (double& v : dir) v /= norm;
    return dir;
}

ImageTensor ToyTextToImage::generate(const std::string& text, uint64_t seed) const {
    const std::string canonical = canonicalize_text(text);
    if (canonical.empty()) throw InputError("text-to-image: empty text");

    const auto dir = text_direction(canonical);
    const TensorShape shape = encoder_->input_shape();
    std::vector<double> pattern(shape.size());
    kernels::matvec_transpose(encoder_->matrix(), dir, pattern, encoder_->dim(), shape.size());
    const double norm = kernels::l2_norm(pattern);

    // Unit pixel-space pattern; per-pixel amplitude ~ amp/sqrt(npixels), so
    // renders stay strictly interior and never clamp.
    const uint64_t noise_seed = splitmix64(fnv1a64(canonical) ^ splitmix64(seed));
    std::vector<double> px(shape.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double signal = signal_amplitude_ * pattern[i] / norm;
        const double noise = uniform_at(noise_seed, i, -noise_amplitude_, noise_amplitude_);
        px[i] = std::clamp(0.5 + signal + noise, 0.0, 1.0);
    }
    return ImageTensor(shape.height, shape.width, shape.channels, std::move(px));
}

ToyCaptioner::ToyCaptioner(std::shared_ptr<const ToyImageEncoder> encoder,
                           std::shared_ptr<const ToyTextToImage> renderer,
                           std::vector<std::string> codebook, uint64_t anchor_seed)
    : encoder_(std::move(encoder)), codebook_(std::move(codebook)) {
    if (!encoder_ || !renderer) throw InvalidConfigError("toy captioner needs encoder and renderer");
    if (codebook_.empty()) throw InputError("toy captioner: empty codebook");
    std::set<std::string> seen;
    for (auto& caption : codebook_) {
        caption = canonicalize_text(caption);
        if (caption.empty()) throw InputError("toy captioner: empty codebook caption");
        if (!seen.insert(caption).second)
            throw InputError("toy captioner: duplicate codebook caption: " + caption);
    }
    anchors_.reserve(codebook_.size());
    for (const auto& caption : codebook_) {
        const ImageTensor canonical = renderer->generate(caption, anchor_seed);
        auto emb = encoder_->encode(canonical).values;
        const double norm = kernels::l2_norm(emb);
        if (norm == 0.0) throw BackendError("toy captioner: degenerate anchor for " + caption);
        for (double& v : emb) v /= norm;
        anchors_.push_back(std::move(emb));
    }
}

int ToyCaptioner::nearest_index(const ImageTensor& image) const {
    const auto emb = encoder_->encode(image).values;
    int best = 0;
    double best_cos = -2.0;
    for (std::size_t k = 0; k < anchors_.size(); ++k) {
        const double c = cosine(emb, anchors_[k]);
        if (c > best_cos) {
            best_cos = c;
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::string ToyCaptioner::caption(const ImageTensor& image) const {
    return codebook_[nearest_index(image)];
}

ToyVictim::ToyVictim(std::shared_ptr<const Captioner> captioner)
    : captioner_(std::move(captioner)) {
    if (!captioner_) throw InvalidConfigError("toy victim needs a captioner");
}

std::string ToyVictim::respond(const ImageTensor& image, const std::string& prompt) const {
    (void)prompt;  // answered the same way regardless of phrasing
    return captioner_->caption(image);
}

RuleBasedJudge::RuleBasedJudge(std::shared_ptr<const TextEncoder> encoder,
                               double target_threshold, double clean_threshold)
    : encoder_(std::move(encoder)),
      target_threshold_(target_threshold),
      clean_threshold_(clean_threshold) {
    if (!encoder_) throw InvalidConfigError("rule-based judge needs a text encoder");
}

JudgeVerdict RuleBasedJudge::judge(const std::string& clean_text,
                                   const std::string& generated_text,
                                   const std::string& target_text) const {
    if (canonicalize_text(clean_text).empty() || canonicalize_text(generated_text).empty() ||
        canonicalize_text(target_text).empty())
        throw InputError("judge: all three texts must be nonempty");

    const auto gen = encoder_->encode(generated_text).values;
    const auto tgt = encoder_->encode(target_text).values;
    const auto cle = encoder_->encode(clean_text).values;
    const double sim_target = cosine(gen, tgt);
    const double sim_clean = cosine(gen, cle);

    std::ostringstream why;
    why.setf(std::ios::fixed);
    why.precision(3);
    if (sim_target >= target_threshold_) {
        why << "generated text matches the target (sim " << sim_target << " >= "
            << target_threshold_ << ")";
        return JudgeVerdict(1.0, why.str());
    }
    if (sim_clean < clean_threshold_) {
        why << "generated text is unrelated to the clean text (sim " << sim_clean
            << " < " << clean_threshold_ << ") but does not match the target (sim "
            << sim_target << ")";
        return JudgeVerdict(0.5, why.str());
    }
    why << "generated text still tracks the clean text (sim " << sim_clean
        << " >= " << clean_threshold_ << ")";
    return JudgeVerdict(0.0, why.str());
}

std::string toy_extract_key_info(const std::string& text) {
    static const std::set<std::string> kStopwords = {
        "a",   "an",  "and", "are", "as",   "at",   "be",  "how", "in",  "is",
        "it",  "its", "of",  "on",  "or",   "that", "the", "to",  "was", "were",
        "what", "when", "where", "which", "who", "will", "with"};
    const std::string canonical = canonicalize_text(text);
    if (canonical.empty()) throw InputError("key-info extraction: empty text");

    std::string kept;
    for (const auto& tok : tokenize(canonical)) {
        std::string lowered;
        lowered.reserve(tok.size());
        for (unsigned char c : tok)
            lowered.push_back(static_cast<char>(std::tolower(c)));
        // strip trailing punctuation before the stopword lookup
        while (!lowered.empty() && std::ispunct(static_cast<unsigned char>(lowered.back())))
            lowered.pop_back();
        if (kStopwords.count(lowered)) continue;
        if (!kept.empty()) kept.push_back(' ');
        kept += tok;
    }
    return kept.empty() ? canonical : kept;
}

JudgeVerdict::JudgeVerdict(double score, std::string rationale)
    : score_(score), rationale_(std::move(rationale)) {
    if (score != 0.0 && score != 0.5 && score != 1.0)
        throw InputError("judge verdict score must be one of {0, 0.5, 1}");
    if (rationale_.empty()) throw InputError("judge verdict needs a rationale");
}

}  // namespace coa
