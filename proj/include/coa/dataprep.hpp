#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "coa/model_interfaces.hpp"
#include "json.hpp"

namespace coa {

// Distills a target caption to its key visual content.
class KeyInfoExtractor : public BackendBase {
public:
    virtual std::string extract(const std::string& text) const = 0;
};

// Offline extractor backed by the stopword-dropping rule.
class ToyKeyInfoExtractor : public KeyInfoExtractor {
public:
    std::string name() const override { return "toy-keyinfo"; }
    std::string extract(const std::string& text) const override;
};

// LLM-backed extractor using the keyword-extraction prompt.
class LlmKeyInfoExtractor : public KeyInfoExtractor {
public:
    explicit LlmKeyInfoExtractor(const LlmClient& client) : client_(client) {}
    std::string name() const override { return "llm-keyinfo(" + client_.name() + ")"; }
    int max_concurrency() const override { return client_.max_concurrency(); }
    std::string extract(const std::string& text) const override;

private:
    const LlmClient& client_;
};

// Four-way example record: clean image/text plus target text (raw and
// refined) and generated target image.
struct ExampleRecord {
    std::string id;
    std::string clean_image_path;
    std::string clean_text;
    std::string target_text_raw;
    std::string target_text_refined;
    std::string target_image_path;
    std::map<std::string, std::string> provenance;
};

nlohmann::json to_json(const ExampleRecord& record);
ExampleRecord example_record_from_json(const nlohmann::json& j);

// Uniform seeded draw from a caption pool.
std::string sample_target(const std::vector<std::string>& pool, uint64_t rng_seed);

struct ExtractionResult {
    std::string refined;
    bool from_cache = false;
    bool fallback_raw = false;  // extraction failed, raw text used instead
};

// Cache-backed key-information extraction. The cache key covers the input
// text, the extractor identity and the prompt version, so switching
// extractors never serves stale entries. Extraction failure falls back to
// the raw text with the fallback flag set; an empty refinement of a
// nonempty input falls back the same way.
ExtractionResult extract_key_info(const std::string& text, const KeyInfoExtractor& extractor,
                                  const std::filesystem::path& cache_dir);

struct DataprepBackends {
    const Captioner* captioner = nullptr;
    const KeyInfoExtractor* extractor = nullptr;
    const TextToImage* text_to_image = nullptr;
};

struct PrepFailure {
    std::string id;
    std::string error;
};

struct Manifest {
    std::vector<ExampleRecord> records;
    std::vector<PrepFailure> failures;
};

// Builds one ExampleRecord per readable clean image: caption it, sample and
// refine a target text, render the target image. Every derived field is
// cached under cache_dir (atomic write-rename), so a warm rerun makes no
// backend calls and reproduces the manifest bit for bit. Per-example
// failures are recorded and skipped; they never abort the run.
Manifest prepare_examples(const std::vector<std::filesystem::path>& clean_images,
                          const std::vector<std::string>& target_pool,
                          const DataprepBackends& backends,
                          const std::filesystem::path& cache_dir,
                          uint64_t seed);

// Loads a newline-delimited caption pool, skipping blank lines.
std::vector<std::string> load_caption_pool(const std::filesystem::path& path);

}  // namespace coa
