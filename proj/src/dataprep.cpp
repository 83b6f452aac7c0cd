#include "coa/dataprep.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "coa/errors.hpp"
#include "coa/io.hpp"
#include "coa/rng.hpp"
#include "coa/toy_backends.hpp"

namespace coa {

namespace fs = std::filesystem;

namespace {

// Bump when the extraction prompt wording changes; part of every cache key.
constexpr const char* kPromptVersion = "keyinfo-v1";

std::string strip_quotes(const std::string& text) {
    std::string s = canonicalize_text(text);
    while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                             (s.front() == '\'' && s.back() == '\''))) {
        s = canonicalize_text(s.substr(1, s.size() - 2));
    }
    return s;
}

std::string hex_key(uint64_t h) {
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

uint64_t file_content_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    return h;
}

}  // namespace

std::string ToyKeyInfoExtractor::extract(const std::string& text) const {
    return toy_extract_key_info(text);
}

std::string LlmKeyInfoExtractor::extract(const std::string& text) const {
    const std::string canonical = canonicalize_text(text);
    if (canonical.empty()) throw InputError("key-info extraction: empty text");
    return client_.complete(
        "You extract key visual information from image captions.",
        "Extract the keywords/information from the following sentence (save verbs and "
        "objects): " + canonical);
}

nlohmann::json to_json(const ExampleRecord& record) {
    return nlohmann::json{{"id", record.id},
                          {"clean_image_path", record.clean_image_path},
                          {"clean_text", record.clean_text},
                          {"target_text_raw", record.target_text_raw},
                          {"target_text_refined", record.target_text_refined},
                          {"target_image_path", record.target_image_path},
                          {"provenance", record.provenance}};
}

ExampleRecord example_record_from_json(const nlohmann::json& j) {
    ExampleRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.clean_image_path = j.at("clean_image_path").get<std::string>();
    rec.clean_text = j.at("clean_text").get<std::string>();
    rec.target_text_raw = j.at("target_text_raw").get<std::string>();
    rec.target_text_refined = j.at("target_text_refined").get<std::string>();
    rec.target_image_path = j.at("target_image_path").get<std::string>();
    rec.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    return rec;
}

std::string sample_target(const std::vector<std::string>& pool, uint64_t rng_seed) {
    if (pool.empty()) throw InputError("sample_target: empty caption pool");
    const uint64_t h = splitmix64(splitmix64(rng_seed) ^ 0xa02bdbf7bb3c0a7ull);
    return pool[h % pool.size()];
}

ExtractionResult extract_key_info(const std::string& text, const KeyInfoExtractor& extractor,
                                  const fs::path& cache_dir) {
    const std::string canonical = canonicalize_text(text);
    if (canonical.empty()) throw InputError("extract_key_info: empty text");

    const uint64_t key = splitmix64(fnv1a64(canonical) ^ fnv1a64(extractor.name()) ^
                                    fnv1a64(kPromptVersion));
    const fs::path entry = cache_dir / "keyinfo" / (hex_key(key) + ".json");

    if (fs::exists(entry)) {
        const auto cached = io::read_json(entry);
        return ExtractionResult{cached.at("refined").get<std::string>(), true,
                                cached.at("fallback_raw").get<bool>()};
    }

    ExtractionResult result;
    try {
        result.refined = strip_quotes(extractor.extract(canonical));
        if (result.refined.empty()) {
            result.refined = canonical;
            result.fallback_raw = true;
        }
    } catch (const Error&) {
        result.refined = canonical;
        result.fallback_raw = true;
    }

    io::atomic_write_json(entry, nlohmann::json{{"input", canonical},
                                                {"refined", result.refined},
                                                {"fallback_raw", result.fallback_raw},
                                                {"extractor", extractor.name()},
                                                {"prompt_version", kPromptVersion}});
    return result;
}

namespace {

// Caption cache keyed by image file content and captioner identity.
std::string cached_caption(const fs::path& image_path, const ImageTensor& image,
                           const Captioner& captioner, const fs::path& cache_dir) {
    const uint64_t key =
        splitmix64(file_content_hash(image_path) ^ fnv1a64(captioner.name()));
    const fs::path entry = cache_dir / "captions" / (hex_key(key) + ".json");
    if (fs::exists(entry)) return io::read_json(entry).at("caption").get<std::string>();

    const std::string caption = captioner.caption(image);
    io::atomic_write_json(entry, nlohmann::json{{"caption", caption},
                                                {"captioner", captioner.name()},
                                                {"image", image_path.string()}});
    return caption;
}

fs::path cached_target_image(const std::string& target_text, uint64_t t2i_seed,
                             const TextToImage& t2i, const fs::path& cache_dir) {
    const uint64_t key = splitmix64(fnv1a64(canonicalize_text(target_text)) ^
                                    fnv1a64(t2i.name()) ^ splitmix64(t2i_seed));
    const fs::path png = cache_dir / "target_images" / (hex_key(key) + ".png");
    if (fs::exists(png)) return png;

    const ImageTensor generated = t2i.generate(target_text, t2i_seed);
    io::save_png(png, generated);
    return png;
}

}  // namespace

std::vector<std::string> load_caption_pool(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open caption pool: " + path.string());
    std::vector<std::string> pool;
    std::string line;
    while (std::getline(in, line)) {
        const std::string c = canonicalize_text(line);
        if (!c.empty()) pool.push_back(c);
    }
    return pool;
}

Manifest prepare_examples(const std::vector<fs::path>& clean_images,
                          const std::vector<std::string>& target_pool,
                          const DataprepBackends& backends,
                          const fs::path& cache_dir,
                          uint64_t seed) {
    if (!backends.captioner || !backends.extractor || !backends.text_to_image)
        throw InvalidConfigError("prepare_examples: captioner, extractor and text-to-image "
                                 "backends are all required");
    if (!clean_images.empty() && target_pool.empty())
        throw InputError("prepare_examples: empty target caption pool");

    std::error_code ec;
    fs::create_directories(cache_dir / "captions", ec);
    fs::create_directories(cache_dir / "keyinfo", ec);
    fs::create_directories(cache_dir / "target_images", ec);
    if (ec) throw IoError("cache directory is not writable: " + cache_dir.string());

    // Stable unique ids from file stems.
    std::vector<std::string> ids(clean_images.size());
    std::set<std::string> used;
    for (std::size_t i = 0; i < clean_images.size(); ++i) {
        std::string id = clean_images[i].stem().string();
        if (id.empty()) id = "example";
        std::string candidate = id;
        int k = 1;
        while (!used.insert(candidate).second) candidate = id + "-" + std::to_string(k++);
        ids[i] = candidate;
    }

    struct Slot {
        bool ok = false;
        ExampleRecord record;
        std::string error;
    };
    std::vector<Slot> slots(clean_images.size());

    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(clean_images.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        Slot& slot = slots[i];
        try {
            const fs::path& img_path = clean_images[i];
            const ImageTensor clean = io::load_image(img_path);

            ExampleRecord rec;
            rec.id = ids[i];
            rec.clean_image_path = img_path.string();
            rec.clean_text = cached_caption(img_path, clean, *backends.captioner, cache_dir);
            rec.provenance["clean_text"] = "captioner:" + backends.captioner->name();

            const uint64_t sample_seed = derive_seed(seed, rec.id, "target-sample");
            rec.target_text_raw = sample_target(target_pool, sample_seed);
            rec.provenance["target_text_raw"] =
                "pool-sample:seed=" + std::to_string(sample_seed);

            const auto refined =
                extract_key_info(rec.target_text_raw, *backends.extractor, cache_dir);
            rec.target_text_refined = refined.refined;
            rec.provenance["target_text_refined"] =
                (refined.fallback_raw ? "fallback:raw-text"
                                      : "extractor:" + backends.extractor->name());

            const uint64_t t2i_seed = derive_seed(seed, rec.id, "t2i");
            rec.target_image_path =
                cached_target_image(rec.target_text_raw, t2i_seed, *backends.text_to_image,
                                    cache_dir)
                    .string();
            rec.provenance["target_image"] = "text-to-image:" + backends.text_to_image->name() +
                                             ":seed=" + std::to_string(t2i_seed);
            slot.record = std::move(rec);
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        } catch (...) {
            slot.error = "unknown failure";
        }
    }

    Manifest manifest;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].ok)
            manifest.records.push_back(std::move(slots[i].record));
        else
            manifest.failures.push_back(PrepFailure{ids[i], slots[i].error});
    }
    return manifest;
}

}  // namespace coa
