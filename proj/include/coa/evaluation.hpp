#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coa/image.hpp"
#include "coa/model_interfaces.hpp"

namespace coa {

// 100 x cosine similarity of the two texts' embeddings under one encoder.
double clip_score(const std::string& generated_text, const std::string& target_text,
                  const TextEncoder& encoder);

struct EnsembleScore {
    std::map<std::string, double> per_encoder;  // encoder name -> score
    double ensemble = 0.0;                      // mean over present encoders
    std::vector<std::string> missing;           // encoders that failed
};

// Per-encoder scores plus their arithmetic mean. A failing encoder is marked
// missing and excluded from the mean; at least one encoder must succeed.
EnsembleScore ensemble_clip_score(const std::string& generated_text,
                                  const std::string& target_text,
                                  const std::vector<const TextEncoder*>& encoders);

struct AsrTriple {
    std::string clean_text;
    std::string generated_text;
    std::string target_text;
};

struct AsrReport {
    double target_asr = 0.0;        // fraction of verdicts scoring exactly 1
    double fool_rate = 0.0;         // fraction of verdicts scoring >= 0.5
    double mean_judge_score = 0.0;  // arithmetic mean of verdict scores
    int n_scored = 0;
    int n_judge_errors = 0;         // judge/parse failures, excluded from rates
    bool empty_denominator = false; // every example failed the judge
    // One entry per input triple; nullopt when the judge failed on it.
    std::vector<std::optional<JudgeVerdict>> verdicts;
};

// Runs the judge over every triple and aggregates the three-level scores.
// Judge failures are counted and excluded from every denominator; they are
// never silently scored.
AsrReport compute_asr(const std::vector<AsrTriple>& triples, const Judge& judge);

struct NoisePoint {
    double stddev = 0.0;
    double mean_score = 0.0;
    int n = 0;              // responses that contributed
    bool missing = false;   // no usable response at this noise level
};

// For each noise level: add seeded Gaussian pixel noise (clamped to [0,1]),
// query the victim once per noise seed, and score the response. Victim
// failures mark samples (and, if all fail, the whole point) missing; the
// sweep continues.
std::vector<NoisePoint> noise_sensitivity_sweep(
    const ImageTensor& adv_image, const std::vector<double>& stddevs, const Victim& victim,
    const std::string& prompt,
    const std::function<double(const std::string& response)>& score_response,
    int seeds_per_std, uint64_t base_seed);

// Pluggable perceptual distance seam. Built-ins: "l2" and "linf"; external
// metrics (e.g. a learned perceptual distance) register under their own
// name.
class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;
    virtual std::string name() const = 0;
    virtual double distance(const ImageTensor& a, const ImageTensor& b) const = 0;
};

void register_perceptual_metric(std::shared_ptr<const PerceptualMetric> metric);
// Throws CapabilityError for unknown names.
const PerceptualMetric& perceptual_metric(const std::string& name);

double perceptual_distance(const ImageTensor& image_a, const ImageTensor& image_b,
                           const std::string& metric_name);

}  // namespace coa
