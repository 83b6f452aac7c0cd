#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coa/core.hpp"
#include "coa/errors.hpp"
#include "coa/model_interfaces.hpp"

namespace coa {

struct ChainStepRecord {
    int step = 0;
    std::string caption;      // caption in effect at this step
    double loss = 0.0;
    double sim_target = 0.0;
    double sim_clean = 0.0;
    double delta_linf = 0.0;  // of the delta the step evaluated
};

struct AttackBackends {
    const ImageEncoder* image_encoder = nullptr;
    const TextEncoder* text_encoder = nullptr;
    const Captioner* captioner = nullptr;
};

// One side of an attack example: pixels, the paired text, and an identifier
// (usually the originating path) for bookkeeping.
struct ImageTextPair {
    ImageTensor image;
    std::string text;
    std::string ref;
};

struct AdversarialArtifact {
    ImageTensor adv_image;
    std::string final_caption;     // captioner output on the final image
    double final_loss = 0.0;       // loss at the final delta, last caption embedding
    std::vector<ChainStepRecord> trace;
    AttackConfig config;
    std::string clean_ref;
    std::string target_ref;
    std::vector<std::string> warnings;
};

// Thrown when a backend fails mid-chain; carries whatever trace accumulated.
class ChainAbortedError : public Error {
public:
    ChainAbortedError(const std::string& what, int step, std::vector<ChainStepRecord> partial)
        : Error(what), step_(step), partial_(std::move(partial)) {}
    int step() const { return step_; }
    const std::vector<ChainStepRecord>& partial_trace() const { return partial_; }

private:
    int step_;
    std::vector<ChainStepRecord> partial_;
};

// The attack loop: per step, optionally re-caption the current adversarial
// image, re-fuse the embeddings, take one sign-ascent step on the hinge loss
// and clamp back into the budget box. Reference embeddings for the clean and
// target pairs are computed once up front. Steps are 0-based; a step whose
// index is divisible by config.caption_refresh_interval re-captions (so step
// 0 always does), other steps reuse the previous caption embedding.
AdversarialArtifact run_chain(const ImageTextPair& clean_pair,
                              const ImageTextPair& target_pair,
                              const AttackConfig& config,
                              const AttackBackends& backends);

struct ExampleOutcome {
    std::string id;
    bool ok = false;
    std::string error;          // empty when ok
    std::string adv_image_path; // empty when not persisted
    std::string trace_path;
    std::string final_caption;
    double final_loss = 0.0;
};

struct BatchSummary {
    int succeeded = 0;
    int failed = 0;
    std::vector<ExampleOutcome> outcomes;  // in input order
};

struct BatchExample {
    std::string id;
    ImageTextPair clean;
    ImageTextPair target;
};

// Runs one chain per example with per-example seeds derived from
// (config.rng_seed, example id, "attack"). Examples run in parallel workers;
// failures are isolated per example and recorded, never fatal to the batch.
// Artifacts land under run_dir/adv, traces under run_dir/traces, plus an
// attack_summary.jsonl in input order.
BatchSummary run_batch(const std::vector<BatchExample>& examples,
                       const AttackConfig& config,
                       const AttackBackends& backends,
                       const std::filesystem::path& run_dir,
                       int workers = 0);

}  // namespace coa
