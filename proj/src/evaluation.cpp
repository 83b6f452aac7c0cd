#include "coa/evaluation.hpp"

#include <cmath>
#include <mutex>

#include "coa/errors.hpp"
#include "coa/kernels.hpp"
#include "coa/toy_backends.hpp"

namespace coa {

double clip_score(const std::string& generated_text, const std::string& target_text,
                  const TextEncoder& encoder) {
    if (canonicalize_text(generated_text).empty() || canonicalize_text(target_text).empty())
        throw InputError("clip_score: texts must be nonempty");
    const auto a = encoder.encode(generated_text).values;
    const auto b = encoder.encode(target_text).values;
    const double na = kernels::l2_norm(a);
    const double nb = kernels::l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return 100.0 * kernels::dot(a, b) / (na * nb);
}

EnsembleScore ensemble_clip_score(const std::string& generated_text,
                                  const std::string& target_text,
                                  const std::vector<const TextEncoder*>& encoders) {
    if (encoders.empty())
        throw InvalidConfigError("ensemble_clip_score: at least one encoder required");
    EnsembleScore out;
    double sum = 0.0;
    for (const TextEncoder* enc : encoders) {
        try {
            const double s = clip_score(generated_text, target_text, *enc);
            out.per_encoder[enc->name()] = s;
            sum += s;
        } catch (const Error&) {
            out.missing.push_back(enc->name());
        }
    }
    if (out.per_encoder.empty())
        throw BackendError("ensemble_clip_score: every encoder failed");
    out.ensemble = sum / static_cast<double>(out.per_encoder.size());
    return out;
}

AsrReport compute_asr(const std::vector<AsrTriple>& triples, const Judge& judge) {
    if (triples.empty()) throw InputError("compute_asr: no triples to score");

    AsrReport report;
    report.verdicts.reserve(triples.size());
    int n_target = 0;
    int n_fooled = 0;
    double score_sum = 0.0;
    for (const auto& t : triples) {
        try {
            JudgeVerdict v = judge.judge(t.clean_text, t.generated_text, t.target_text);
            score_sum += v.score();
            if (v.score() == 1.0) ++n_target;
            if (v.score() >= 0.5) ++n_fooled;
            ++report.n_scored;
            report.verdicts.emplace_back(std::move(v));
        } catch (const Error&) {
            ++report.n_judge_errors;
            report.verdicts.emplace_back(std::nullopt);
        }
    }

    if (report.n_scored == 0) {
        report.empty_denominator = true;
        return report;
    }
    const double n = static_cast<double>(report.n_scored);
    report.target_asr = n_target / n;
    report.fool_rate = n_fooled / n;
    report.mean_judge_score = score_sum / n;
    return report;
}

std::vector<NoisePoint> noise_sensitivity_sweep(
    const ImageTensor& adv_image, const std::vector<double>& stddevs, const Victim& victim,
    const std::string& prompt,
    const std::function<double(const std::string& response)>& score_response,
    int seeds_per_std, uint64_t base_seed) {
    if (seeds_per_std < 1)
        throw InvalidConfigError("noise sweep: seeds_per_std must be >= 1");
    for (double s : stddevs)
        if (s < 0.0) throw InvalidConfigError("noise sweep: stddevs must be nonnegative");

    std::vector<NoisePoint> curve;
    curve.reserve(stddevs.size());
    for (std::size_t si = 0; si < stddevs.size(); ++si) {
        NoisePoint point;
        point.stddev = stddevs[si];
        double sum = 0.0;
        for (int k = 0; k < seeds_per_std; ++k) {
            const uint64_t seed = base_seed + 1000003ull * si + static_cast<uint64_t>(k);
            std::vector<double> noisy(adv_image.size());
            kernels::gaussian_add_clamp01(adv_image.pixels(), point.stddev, seed, noisy);
            const ImageTensor img(adv_image.height(), adv_image.width(), adv_image.channels(),
                                  std::move(noisy));
            try {
                const std::string response = victim.respond(img, prompt);
                sum += score_response(response);
                ++point.n;
            } catch (const Error&) {
                // victim failure: sample dropped, sweep continues
            }
        }
        if (point.n == 0) {
            point.missing = true;
        } else {
            point.mean_score = sum / point.n;
        }
        curve.push_back(point);
    }
    return curve;
}

namespace {

class L2Metric : public PerceptualMetric {
public:
    std::string name() const override { return "l2"; }
    double distance(const ImageTensor& a, const ImageTensor& b) const override {
        double acc = 0.0;
        const auto pa = a.pixels();
        const auto pb = b.pixels();
        for (std::size_t i = 0; i < pa.size(); ++i) {
            const double d = pa[i] - pb[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    }
};

class LinfMetric : public PerceptualMetric {
public:
    std::string name() const override { return "linf"; }
    double distance(const ImageTensor& a, const ImageTensor& b) const override {
        double m = 0.0;
        const auto pa = a.pixels();
        const auto pb = b.pixels();
        for (std::size_t i = 0; i < pa.size(); ++i)
            m = std::max(m, std::abs(pa[i] - pb[i]));
        return m;
    }
};

std::map<std::string, std::shared_ptr<const PerceptualMetric>>& metric_registry() {
    static std::map<std::string, std::shared_ptr<const PerceptualMetric>> registry = {
        {"l2", std::make_shared<L2Metric>()},
        {"linf", std::make_shared<LinfMetric>()},
    };
    return registry;
}

std::mutex& metric_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

void register_perceptual_metric(std::shared_ptr<const PerceptualMetric> metric) {
    std::lock_guard<std::mutex> lock(metric_mutex());
    metric_registry()[metric->name()] = std::move(metric);
}

const PerceptualMetric& perceptual_metric(const std::string& name) {
    std::lock_guard<std::mutex> lock(metric_mutex());
    const auto it = metric_registry().find(name);
    if (it == metric_registry().end())
        throw CapabilityError("no perceptual metric registered under '" + name +
                              "' (built-ins: l2, linf)");
    return *it->second;
}

double perceptual_distance(const ImageTensor& image_a, const ImageTensor& image_b,
                           const std::string& metric_name) {
    if (!image_a.same_shape(image_b))
        throw ShapeError("perceptual_distance: image shapes differ");
    return perceptual_metric(metric_name).distance(image_a, image_b);
}

}  // namespace coa
