#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coa/chain.hpp"
#include "coa/dataprep.hpp"
#include "coa/evaluation.hpp"
#include "coa/llm_client.hpp"
#include "coa/toy_backends.hpp"
#include "json.hpp"

namespace coa {

// Resolved run configuration. One hierarchical JSON document with sections
// {data, backends, attack, eval, sweep}; validation collects every offending
// key before reporting.
struct RunConfig {
    uint64_t seed = 0;
    int workers = 0;

    std::filesystem::path images_dir;
    std::filesystem::path caption_pool;
    std::filesystem::path cache_dir;

    // backends (toy universe)
    int embedding_dim = 64;
    int image_height = 64;
    int image_width = 64;
    uint64_t encoder_seed = 2024;
    double t2i_signal = 0.35;
    double t2i_noise = 0.03;

    std::string judge_kind = "toy";  // "toy" | "llm"
    double judge_target_threshold = 0.7;
    double judge_clean_threshold = 0.5;
    std::string extractor_kind = "toy";  // "toy" | "llm"
    std::string llm_endpoint;
    std::string llm_path = "/v1/chat/completions";
    std::string llm_model;
    std::string llm_api_key_env = "COA_API_KEY";

    AttackConfig attack;

    std::string eval_prompt = "What is the content of this image?";
    bool clean_baseline = true;
    struct EvalEncoderSpec {
        std::string name;
        int dim = 96;
        uint64_t salt = 0;
    };
    std::vector<EvalEncoderSpec> eval_encoders;
    std::vector<double> noise_stds;
    int noise_seeds_per_std = 20;

    struct SweepEntry {
        std::string label;
        nlohmann::json overrides;
    };
    std::vector<SweepEntry> sweep;

    nlohmann::json snapshot;  // fully resolved document
};

// Parses and validates a config document; throws ValidationError naming
// every offending key path.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& config_path,
                          std::optional<uint64_t> seed_override = std::nullopt,
                          std::optional<int> workers_override = std::nullopt);

// The full deterministic offline model set built from one config.
struct ToyUniverse {
    std::shared_ptr<const ToyImageEncoder> image_encoder;
    std::shared_ptr<const ToyTextEncoder> text_encoder;
    std::shared_ptr<const ToyTextToImage> text_to_image;
    std::shared_ptr<const ToyCaptioner> captioner;
    std::shared_ptr<const Victim> victim;
    std::shared_ptr<const Judge> judge;
    std::shared_ptr<const KeyInfoExtractor> extractor;
    std::vector<std::shared_ptr<const TextEncoder>> eval_encoders;
    std::shared_ptr<const LlmClient> llm;  // set when a remote judge/extractor is configured

    AttackBackends attack_backends() const;
    DataprepBackends dataprep_backends() const;
    std::vector<const TextEncoder*> eval_encoder_ptrs() const;
};

ToyUniverse build_universe(const RunConfig& config, const std::vector<std::string>& codebook,
                           const std::filesystem::path& run_dir);

// Stage bookkeeping persisted as run.json in the run directory. The config
// snapshot is written on first contact and must match on every later
// command; stage transitions only move forward.
class RunManifest {
public:
    static RunManifest open(const std::filesystem::path& run_dir, const nlohmann::json& snapshot);

    bool stage_done(const std::string& stage) const;
    void mark(const std::string& stage, const std::string& status);  // "done" | "failed"
    const std::string& run_id() const { return run_id_; }

private:
    std::filesystem::path path_;
    std::string run_id_;
    nlohmann::json doc_;
    void save() const;
};

struct StageOutcome {
    int exit_code = 0;  // 0 success, 1 partial failures, 2 config/validation
    std::string message;
};

// Pipeline commands. Each resolves the config, expands sweep entries into
// sibling run directories, skips stages already done, and aggregates the
// worst exit code.
StageOutcome cmd_prepare(const std::filesystem::path& config_path,
                         const std::filesystem::path& run_dir,
                         std::optional<uint64_t> seed = std::nullopt,
                         std::optional<int> workers = std::nullopt);
StageOutcome cmd_attack(const std::filesystem::path& config_path,
                        const std::filesystem::path& run_dir,
                        std::optional<uint64_t> seed = std::nullopt,
                        std::optional<int> workers = std::nullopt);
StageOutcome cmd_evaluate(const std::filesystem::path& config_path,
                          const std::filesystem::path& run_dir,
                          std::optional<uint64_t> seed = std::nullopt,
                          std::optional<int> workers = std::nullopt);
StageOutcome cmd_noise_sweep(const std::filesystem::path& config_path,
                             const std::filesystem::path& run_dir,
                             std::optional<uint64_t> seed = std::nullopt,
                             std::optional<int> workers = std::nullopt);
StageOutcome cmd_report(const std::filesystem::path& config_path,
                        const std::filesystem::path& run_dir,
                        std::optional<uint64_t> seed = std::nullopt,
                        std::optional<int> workers = std::nullopt);

}  // namespace coa
