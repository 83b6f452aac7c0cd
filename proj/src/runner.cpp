#include "coa/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "coa/io.hpp"
#include "coa/report.hpp"
#include "coa/rng.hpp"

namespace coa {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// config parsing

namespace {

class ConfigReader {
public:
    explicit ConfigReader(const json& doc) : doc_(doc) {}

    const json* find(const std::string& dotted_path) const {
        const json* cur = &doc_;
        std::istringstream in(dotted_path);
        std::string part;
        while (std::getline(in, part, '.')) {
            if (!cur->is_object() || !cur->contains(part)) return nullptr;
            cur = &(*cur)[part];
        }
        return cur;
    }

    template <typename T>
    T get_or(const std::string& path, T fallback) {
        const json* v = find(path);
        if (!v) return fallback;
        try {
            return v->get<T>();
        } catch (const json::exception&) {
            errors_.push_back(path);
            return fallback;
        }
    }

    std::string require_string(const std::string& path) {
        const json* v = find(path);
        if (!v || !v->is_string() || v->get<std::string>().empty()) {
            errors_.push_back(path);
            return {};
        }
        return v->get<std::string>();
    }

    void flag(const std::string& path) { errors_.push_back(path); }
    const std::vector<std::string>& errors() const { return errors_; }

private:
    const json& doc_;
    std::vector<std::string> errors_;
};

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
    if (!doc.is_object())
        throw ValidationError("config must be a JSON object", {"<root>"});
    ConfigReader r(doc);
    RunConfig cfg;

    cfg.seed = r.get_or<uint64_t>("seed", 0);
    cfg.workers = r.get_or<int>("workers", 0);

    cfg.images_dir = r.require_string("data.images_dir");
    cfg.caption_pool = r.require_string("data.caption_pool");
    cfg.cache_dir = r.require_string("data.cache_dir");

    cfg.embedding_dim = r.get_or<int>("backends.embedding_dim", 64);
    cfg.image_height = r.get_or<int>("backends.image_height", 64);
    cfg.image_width = r.get_or<int>("backends.image_width", 64);
    cfg.encoder_seed = r.get_or<uint64_t>("backends.encoder_seed", 2024);
    cfg.t2i_signal = r.get_or<double>("backends.t2i_signal", 0.35);
    cfg.t2i_noise = r.get_or<double>("backends.t2i_noise", 0.03);
    if (cfg.embedding_dim <= 0) r.flag("backends.embedding_dim");
    if (cfg.image_height <= 0) r.flag("backends.image_height");
    if (cfg.image_width <= 0) r.flag("backends.image_width");

    cfg.judge_kind = r.get_or<std::string>("backends.judge.kind", "toy");
    if (cfg.judge_kind != "toy" && cfg.judge_kind != "llm") r.flag("backends.judge.kind");
    cfg.judge_target_threshold = r.get_or<double>("backends.judge.target_threshold", 0.7);
    cfg.judge_clean_threshold = r.get_or<double>("backends.judge.clean_threshold", 0.5);
    cfg.extractor_kind = r.get_or<std::string>("backends.extractor.kind", "toy");
    if (cfg.extractor_kind != "toy" && cfg.extractor_kind != "llm")
        r.flag("backends.extractor.kind");

    cfg.llm_endpoint = r.get_or<std::string>("backends.llm.endpoint", "");
    cfg.llm_path = r.get_or<std::string>("backends.llm.path", "/v1/chat/completions");
    cfg.llm_model = r.get_or<std::string>("backends.llm.model", "");
    cfg.llm_api_key_env = r.get_or<std::string>("backends.llm.api_key_env", "COA_API_KEY");
    if ((cfg.judge_kind == "llm" || cfg.extractor_kind == "llm") && cfg.llm_endpoint.empty())
        r.flag("backends.llm.endpoint");
    if ((cfg.judge_kind == "llm" || cfg.extractor_kind == "llm") && cfg.llm_model.empty())
        r.flag("backends.llm.model");

    cfg.attack.eps = r.get_or<double>("attack.eps", 8.0 / 255.0);
    cfg.attack.step_size_eta = r.get_or<double>("attack.step_size_eta", 1.0 / 255.0);
    cfg.attack.pgd_steps = r.get_or<int>("attack.pgd_steps", 100);
    cfg.attack.alpha = r.get_or<double>("attack.alpha", 0.5);
    cfg.attack.beta = r.get_or<double>("attack.beta", 0.4);
    cfg.attack.gamma = r.get_or<double>("attack.gamma", 1.0 - cfg.attack.beta);
    cfg.attack.caption_refresh_interval = r.get_or<int>("attack.caption_refresh_interval", 1);
    cfg.attack.rng_seed = cfg.seed;
    try {
        cfg.attack.validate();
    } catch (const InvalidConfigError& e) {
        r.flag(std::string("attack (") + e.what() + ")");
    }

    cfg.eval_prompt =
        r.get_or<std::string>("eval.prompt", "What is the content of this image?");
    cfg.clean_baseline = r.get_or<bool>("eval.clean_baseline", true);
    if (const json* encoders = r.find("eval.encoders")) {
        if (!encoders->is_array()) {
            r.flag("eval.encoders");
        } else {
            for (std::size_t i = 0; i < encoders->size(); ++i) {
                const json& e = (*encoders)[i];
                RunConfig::EvalEncoderSpec spec;
                try {
                    spec.name = e.at("name").get<std::string>();
                    spec.dim = e.value("dim", 96);
                    spec.salt = e.value("salt", static_cast<uint64_t>(100 + i));
                } catch (const json::exception&) {
                    r.flag("eval.encoders[" + std::to_string(i) + "]");
                    continue;
                }
                if (spec.name.empty() || spec.dim <= 0)
                    r.flag("eval.encoders[" + std::to_string(i) + "]");
                cfg.eval_encoders.push_back(std::move(spec));
            }
        }
    }
    if (cfg.eval_encoders.empty()) {
        cfg.eval_encoders = {{"hash-a", 96, 101},  {"hash-b", 128, 202}, {"hash-c", 160, 303},
                             {"hash-d", 192, 404}, {"hash-e", 224, 505}};
    }
    cfg.noise_stds = r.get_or<std::vector<double>>("eval.noise.stds", {});
    cfg.noise_seeds_per_std = r.get_or<int>("eval.noise.seeds_per_std", 20);
    for (double s : cfg.noise_stds)
        if (s < 0.0) r.flag("eval.noise.stds");
    if (cfg.noise_seeds_per_std < 1) r.flag("eval.noise.seeds_per_std");

    if (const json* sweep = r.find("sweep")) {
        if (!sweep->is_array()) {
            r.flag("sweep");
        } else {
            std::set<std::string> labels;
            for (std::size_t i = 0; i < sweep->size(); ++i) {
                const json& entry = (*sweep)[i];
                RunConfig::SweepEntry se;
                try {
                    se.label = entry.at("label").get<std::string>();
                    se.overrides = entry.at("overrides");
                } catch (const json::exception&) {
                    r.flag("sweep[" + std::to_string(i) + "]");
                    continue;
                }
                if (se.label.empty() || !se.overrides.is_object() ||
                    !labels.insert(se.label).second) {
                    r.flag("sweep[" + std::to_string(i) + "]");
                    continue;
                }
                cfg.sweep.push_back(std::move(se));
            }
        }
    }

    if (!r.errors().empty())
        throw ValidationError("invalid configuration", r.errors());

    cfg.snapshot = doc;
    return cfg;
}

RunConfig load_run_config(const fs::path& config_path, std::optional<uint64_t> seed_override,
                          std::optional<int> workers_override) {
    json doc;
    try {
        doc = io::read_json(config_path);
    } catch (const IoError& e) {
        throw ValidationError(e.what(), {"<config file>"});
    }
    if (seed_override) doc["seed"] = *seed_override;
    if (workers_override) doc["workers"] = *workers_override;
    return parse_run_config(doc);
}

// ---------------------------------------------------------------------------
// universe

AttackBackends ToyUniverse::attack_backends() const {
    AttackBackends b;
    b.image_encoder = image_encoder.get();
    b.text_encoder = text_encoder.get();
    b.captioner = captioner.get();
    return b;
}

DataprepBackends ToyUniverse::dataprep_backends() const {
    DataprepBackends b;
    b.captioner = captioner.get();
    b.extractor = extractor.get();
    b.text_to_image = text_to_image.get();
    return b;
}

std::vector<const TextEncoder*> ToyUniverse::eval_encoder_ptrs() const {
    std::vector<const TextEncoder*> out;
    out.reserve(eval_encoders.size());
    for (const auto& e : eval_encoders) out.push_back(e.get());
    return out;
}

ToyUniverse build_universe(const RunConfig& config, const std::vector<std::string>& codebook,
                           const fs::path& run_dir) {
    ToyUniverse u;
    const TensorShape shape{config.image_height, config.image_width, 3};
    u.image_encoder =
        std::make_shared<ToyImageEncoder>(config.embedding_dim, shape, config.encoder_seed);
    u.text_encoder = std::make_shared<ToyTextEncoder>(config.embedding_dim,
                                                      /*salt=*/0x5eed5a17u, "toy-text-encoder");
    u.text_to_image = std::make_shared<ToyTextToImage>(u.image_encoder, config.t2i_signal,
                                                       config.t2i_noise);
    u.captioner = std::make_shared<ToyCaptioner>(u.image_encoder, u.text_to_image, codebook);
    u.victim = std::make_shared<ToyVictim>(u.captioner);

    if (config.judge_kind == "llm" || config.extractor_kind == "llm") {
        HttpChatConfig http;
        http.endpoint = config.llm_endpoint;
        http.path = config.llm_path;
        http.model = config.llm_model;
        if (const char* key = std::getenv(config.llm_api_key_env.c_str())) http.api_key = key;
        auto digest_log = std::make_shared<std::ofstream>();
        auto digest_mutex = std::make_shared<std::mutex>();
        const fs::path log_path = run_dir / "logs" / "llm_digests.log";
        fs::create_directories(log_path.parent_path());
        digest_log->open(log_path, std::ios::app);
        http.digest_sink = [digest_log, digest_mutex](const std::string& line) {
            std::lock_guard<std::mutex> lock(*digest_mutex);
            (*digest_log) << line << "\n";
            digest_log->flush();
        };
        u.llm = std::make_shared<HttpChatClient>(std::move(http));
    }

    if (config.judge_kind == "llm") {
        u.judge = std::make_shared<LlmJudge>(*u.llm);
    } else {
        auto judge_encoder =
            std::make_shared<ToyTextEncoder>(128, /*salt=*/0xbead0fu, "judge-text-encoder");
        u.judge = std::make_shared<RuleBasedJudge>(judge_encoder, config.judge_target_threshold,
                                                   config.judge_clean_threshold);
    }

    if (config.extractor_kind == "llm")
        u.extractor = std::make_shared<LlmKeyInfoExtractor>(*u.llm);
    else
        u.extractor = std::make_shared<ToyKeyInfoExtractor>();

    for (const auto& spec : config.eval_encoders)
        u.eval_encoders.push_back(
            std::make_shared<ToyTextEncoder>(spec.dim, spec.salt, spec.name));
    return u;
}

// ---------------------------------------------------------------------------
// run manifest

RunManifest RunManifest::open(const fs::path& run_dir, const json& snapshot) {
    fs::create_directories(run_dir);
    RunManifest m;
    m.path_ = run_dir / "run.json";
    m.run_id_ = run_dir.filename().string();
    if (fs::exists(m.path_)) {
        m.doc_ = io::read_json(m.path_);
        if (m.doc_.value("config_snapshot", json{}) != snapshot)
            throw ValidationError(
                "config does not match this run's recorded snapshot; use a fresh run "
                "directory or the original config",
                {"<config snapshot>"});
    } else {
        m.doc_ = json{{"run_id", m.run_id_},
                      {"config_snapshot", snapshot},
                      {"stages", json::object()},
                      {"timestamps", json::object()}};
        m.save();
    }
    return m;
}

bool RunManifest::stage_done(const std::string& stage) const {
    return doc_.at("stages").value(stage, "") == "done";
}

void RunManifest::mark(const std::string& stage, const std::string& status) {
    doc_["stages"][stage] = status;
    doc_["timestamps"][stage] = now_iso8601();
    save();
}

void RunManifest::save() const { io::atomic_write_json(path_, doc_); }

// ---------------------------------------------------------------------------
// stages

namespace {

void log_line(const fs::path& run_dir, const std::string& stage, const std::string& line) {
    fs::create_directories(run_dir / "logs");
    std::ofstream out(run_dir / "logs" / (stage + ".log"), std::ios::app);
    out << now_iso8601() << " " << line << "\n";
}

struct RunContext {
    RunConfig config;
    fs::path run_dir;
    bool is_base = false;
};

void deep_merge(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (const auto& [key, value] : overlay.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object())
            deep_merge(base[key], value);
        else
            base[key] = value;
    }
}

fs::path sibling_dir(const fs::path& run_dir, const std::string& label) {
    fs::path dir = run_dir;
    dir += "-" + label;
    return dir;
}

std::vector<RunContext> expand_sweep(const RunConfig& base, const fs::path& run_dir) {
    std::vector<RunContext> out;
    out.push_back(RunContext{base, run_dir, true});
    for (const auto& entry : base.sweep) {
        json merged = base.snapshot;
        deep_merge(merged, entry.overrides);
        merged.erase("sweep");  // siblings do not sweep recursively
        RunConfig cfg = parse_run_config(merged);
        out.push_back(RunContext{std::move(cfg), sibling_dir(run_dir, entry.label), false});
    }
    return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw ValidationError("data.images_dir is not a directory: " + dir.string(),
                              {"data.images_dir"});
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<std::string> load_pool_checked(const fs::path& path) {
    if (!fs::is_regular_file(path))
        throw ValidationError("data.caption_pool does not exist: " + path.string(),
                              {"data.caption_pool"});
    return load_caption_pool(path);
}

StageOutcome stage_prepare(const RunContext& ctx) {
    const auto images = list_images(ctx.config.images_dir);
    const auto pool = load_pool_checked(ctx.config.caption_pool);
    const ToyUniverse universe = build_universe(ctx.config, pool, ctx.run_dir);

    const Manifest manifest = prepare_examples(images, pool, universe.dataprep_backends(),
                                               ctx.config.cache_dir, ctx.config.seed);

    std::vector<json> lines;
    for (const auto& rec : manifest.records) lines.push_back(to_json(rec));
    io::atomic_write_jsonl(ctx.run_dir / "manifest.jsonl", lines);

    if (!manifest.failures.empty()) {
        std::vector<json> fail_lines;
        for (const auto& f : manifest.failures)
            fail_lines.push_back(json{{"id", f.id}, {"error", f.error}});
        io::atomic_write_jsonl(ctx.run_dir / "prep_failures.jsonl", fail_lines);
    }

    log_line(ctx.run_dir, "prepare",
             "prepared " + std::to_string(manifest.records.size()) + " examples, " +
                 std::to_string(manifest.failures.size()) + " failures");
    if (!manifest.failures.empty())
        return {1, "prepare: " + std::to_string(manifest.failures.size()) + " examples failed"};
    return {0, "prepare: " + std::to_string(manifest.records.size()) + " examples"};
}

std::vector<ExampleRecord> load_manifest_records(const fs::path& run_dir) {
    const fs::path path = run_dir / "manifest.jsonl";
    if (!fs::exists(path))
        throw ValidationError("no manifest.jsonl in " + run_dir.string() +
                                  "; run `coa prepare` first",
                              {"<pipeline order>"});
    std::vector<ExampleRecord> records;
    for (const auto& line : io::read_jsonl(path)) records.push_back(example_record_from_json(line));
    return records;
}

StageOutcome stage_attack(const RunContext& ctx) {
    const auto records = load_manifest_records(ctx.run_dir);
    const auto pool = load_pool_checked(ctx.config.caption_pool);
    const ToyUniverse universe = build_universe(ctx.config, pool, ctx.run_dir);

    std::vector<BatchExample> examples;
    examples.reserve(records.size());
    for (const auto& rec : records) {
        BatchExample ex{rec.id,
                        ImageTextPair{io::load_image(rec.clean_image_path), rec.clean_text,
                                      rec.clean_image_path},
                        ImageTextPair{io::load_image(rec.target_image_path),
                                      rec.target_text_refined, rec.target_image_path}};
        examples.push_back(std::move(ex));
    }

    AttackConfig attack = ctx.config.attack;
    attack.rng_seed = ctx.config.seed;
    const BatchSummary summary = run_batch(examples, attack, universe.attack_backends(),
                                           ctx.run_dir, ctx.config.workers);

    log_line(ctx.run_dir, "attack",
             "attacked " + std::to_string(summary.succeeded) + " examples, " +
                 std::to_string(summary.failed) + " failures");
    if (summary.failed > 0)
        return {1, "attack: " + std::to_string(summary.failed) + " of " +
                       std::to_string(summary.outcomes.size()) + " examples failed"};
    return {0, "attack: " + std::to_string(summary.succeeded) + " artifacts"};
}

json outcome_index(const fs::path& run_dir) {
    const fs::path path = run_dir / "attack_summary.jsonl";
    if (!fs::exists(path))
        throw ValidationError("no attack_summary.jsonl in " + run_dir.string() +
                                  "; run `coa attack` first",
                              {"<pipeline order>"});
    json index = json::object();
    for (const auto& line : io::read_jsonl(path)) index[line.at("id").get<std::string>()] = line;
    return index;
}

StageOutcome stage_evaluate(const RunContext& ctx) {
    const auto records = load_manifest_records(ctx.run_dir);
    const json outcomes = outcome_index(ctx.run_dir);
    const auto pool = load_pool_checked(ctx.config.caption_pool);
    const ToyUniverse universe = build_universe(ctx.config, pool, ctx.run_dir);
    const auto encoders = universe.eval_encoder_ptrs();

    struct Scored {
        const ExampleRecord* record = nullptr;
        std::string response;
        EnsembleScore scores;
    };
    std::vector<Scored> scored;
    std::vector<std::string> gaps;

    for (const auto& rec : records) {
        if (!outcomes.contains(rec.id) || !outcomes[rec.id].value("ok", false)) {
            gaps.push_back(rec.id);
            continue;
        }
        fs::path adv_path = outcomes[rec.id].value("adv_image_path", "");
        if (adv_path.is_relative()) adv_path = ctx.run_dir / adv_path;
        if (adv_path.empty() || !fs::exists(adv_path)) {
            gaps.push_back(rec.id);
            continue;
        }
        Scored s;
        s.record = &rec;
        const ImageTensor adv = io::load_image(adv_path);
        // The victim sees each adversarial example exactly once.
        s.response = universe.victim->respond(adv, ctx.config.eval_prompt);
        s.scores = ensemble_clip_score(s.response, rec.target_text_raw, encoders);
        scored.push_back(std::move(s));
    }

    std::vector<AsrTriple> triples;
    triples.reserve(scored.size());
    for (const auto& s : scored)
        triples.push_back(
            AsrTriple{s.record->clean_text, s.response, s.record->target_text_raw});
    AsrReport asr;
    if (!triples.empty()) asr = compute_asr(triples, *universe.judge);

    json per_example = json::array();
    std::map<std::string, double> encoder_sums;
    double ensemble_sum = 0.0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        const auto& s = scored[i];
        json entry{{"id", s.record->id},
                   {"prompt", ctx.config.eval_prompt},
                   {"response", s.response},
                   {"per_encoder_scores", s.scores.per_encoder},
                   {"ensemble_score", s.scores.ensemble},
                   {"encoders_missing", s.scores.missing}};
        if (i < asr.verdicts.size() && asr.verdicts[i]) {
            entry["verdict"] = {{"score", asr.verdicts[i]->score()},
                                {"rationale", asr.verdicts[i]->rationale()}};
            entry["judge_error"] = false;
        } else {
            entry["verdict"] = nullptr;
            entry["judge_error"] = true;
        }
        per_example.push_back(std::move(entry));
        for (const auto& [name, score] : s.scores.per_encoder) encoder_sums[name] += score;
        ensemble_sum += s.scores.ensemble;
    }

    json aggregate;
    const double denom = scored.empty() ? 1.0 : static_cast<double>(scored.size());
    json per_encoder_mean = json::object();
    for (const auto& [name, sum] : encoder_sums) per_encoder_mean[name] = sum / denom;
    aggregate["per_encoder_mean"] = per_encoder_mean;
    aggregate["ensemble_mean"] = scored.empty() ? 0.0 : ensemble_sum / denom;
    aggregate["n_examples"] = scored.size();
    aggregate["target_asr"] = asr.target_asr;
    aggregate["fool_rate"] = asr.fool_rate;
    aggregate["mean_judge_score"] = asr.mean_judge_score;
    aggregate["n_scored"] = asr.n_scored;
    aggregate["n_judge_errors"] = asr.n_judge_errors;
    aggregate["empty_denominator"] = asr.empty_denominator;

    json baseline = nullptr;
    if (ctx.config.clean_baseline) {
        json base_examples = json::array();
        std::map<std::string, double> base_sums;
        double base_ensemble_sum = 0.0;
        int n_base = 0;
        for (const auto& rec : records) {
            const ImageTensor clean = io::load_image(rec.clean_image_path);
            const std::string response = universe.victim->respond(clean, ctx.config.eval_prompt);
            const EnsembleScore scores =
                ensemble_clip_score(response, rec.target_text_raw, encoders);
            base_examples.push_back(json{{"id", rec.id},
                                         {"response", response},
                                         {"per_encoder_scores", scores.per_encoder},
                                         {"ensemble_score", scores.ensemble}});
            for (const auto& [name, score] : scores.per_encoder) base_sums[name] += score;
            base_ensemble_sum += scores.ensemble;
            ++n_base;
        }
        json base_mean = json::object();
        for (const auto& [name, sum] : base_sums)
            base_mean[name] = n_base ? sum / n_base : 0.0;
        baseline = json{{"per_example", base_examples},
                        {"aggregate",
                         {{"per_encoder_mean", base_mean},
                          {"ensemble_mean", n_base ? base_ensemble_sum / n_base : 0.0},
                          {"n_examples", n_base}}}};
    }

    const json report_doc = json{{"prompt", ctx.config.eval_prompt},
                                 {"per_example", per_example},
                                 {"aggregate", aggregate},
                                 {"clean_baseline", baseline},
                                 {"gaps", gaps}};
    io::atomic_write_json(ctx.run_dir / "report.json", report_doc);

    // Tables follow the per-encoder / Ensemble / Target / Fool column order.
    std::vector<std::string> columns{"row"};
    for (const auto& spec : ctx.config.eval_encoders) columns.push_back(spec.name);
    columns.insert(columns.end(), {"Ensemble", "Target", "Fool"});

    std::vector<std::vector<std::string>> rows;
    const auto encoder_cell = [&](const json& means, const std::string& name) {
        return means.contains(name) ? report::format_score(means[name].get<double>())
                                    : std::string("-");
    };
    {
        std::vector<std::string> row{"adversarial"};
        for (const auto& spec : ctx.config.eval_encoders)
            row.push_back(encoder_cell(per_encoder_mean, spec.name));
        row.push_back(report::format_score(aggregate["ensemble_mean"].get<double>()));
        row.push_back(report::format_score(asr.target_asr * 100.0));
        row.push_back(report::format_score(asr.fool_rate * 100.0));
        rows.push_back(std::move(row));
    }
    if (!baseline.is_null()) {
        std::vector<std::string> row{"clean"};
        for (const auto& spec : ctx.config.eval_encoders)
            row.push_back(encoder_cell(baseline["aggregate"]["per_encoder_mean"], spec.name));
        row.push_back(
            report::format_score(baseline["aggregate"]["ensemble_mean"].get<double>()));
        row.push_back("-");
        row.push_back("-");
        rows.push_back(std::move(row));
    }
    io::atomic_write_text(ctx.run_dir / "tables" / "table.csv",
                          report::format_table_csv(columns, rows));
    io::atomic_write_text(ctx.run_dir / "tables" / "table.md",
                          report::format_table_markdown(columns, rows));

    log_line(ctx.run_dir, "evaluate",
             "evaluated " + std::to_string(scored.size()) + " examples, " +
                 std::to_string(gaps.size()) + " gaps, " +
                 std::to_string(asr.n_judge_errors) + " judge errors");
    if (!gaps.empty() || asr.n_judge_errors > 0) {
        std::string msg = "evaluate: partial (";
        msg += std::to_string(gaps.size()) + " gaps";
        if (!gaps.empty()) {
            msg += ":";
            for (const auto& g : gaps) msg += " " + g;
        }
        msg += ", " + std::to_string(asr.n_judge_errors) + " judge errors)";
        return {1, msg};
    }
    return {0, "evaluate: " + std::to_string(scored.size()) + " examples scored"};
}

StageOutcome stage_noise_sweep(const RunContext& ctx) {
    if (ctx.config.noise_stds.empty()) {
        io::atomic_write_json(ctx.run_dir / "noise_sweep.json",
                              json{{"points", json::array()},
                                   {"per_example", json::array()},
                                   {"note", "no noise stds configured; sweep skipped"}});
        return {0, "noise-sweep: skipped (no stds configured)"};
    }
    const auto records = load_manifest_records(ctx.run_dir);
    const json outcomes = outcome_index(ctx.run_dir);
    const auto pool = load_pool_checked(ctx.config.caption_pool);
    const ToyUniverse universe = build_universe(ctx.config, pool, ctx.run_dir);
    const auto encoders = universe.eval_encoder_ptrs();

    json per_example = json::array();
    std::vector<double> sums(ctx.config.noise_stds.size(), 0.0);
    std::vector<int> counts(ctx.config.noise_stds.size(), 0);

    for (const auto& rec : records) {
        if (!outcomes.contains(rec.id) || !outcomes[rec.id].value("ok", false)) continue;
        fs::path adv_path = outcomes[rec.id].value("adv_image_path", "");
        if (adv_path.is_relative()) adv_path = ctx.run_dir / adv_path;
        if (adv_path.empty() || !fs::exists(adv_path)) continue;
        const ImageTensor adv = io::load_image(adv_path);

        const auto score_fn = [&](const std::string& response) {
            return ensemble_clip_score(response, rec.target_text_raw, encoders).ensemble;
        };
        const auto curve = noise_sensitivity_sweep(
            adv, ctx.config.noise_stds, *universe.victim, ctx.config.eval_prompt, score_fn,
            ctx.config.noise_seeds_per_std, derive_seed(ctx.config.seed, rec.id, "noise"));

        json points = json::array();
        for (std::size_t i = 0; i < curve.size(); ++i) {
            points.push_back(json{{"std", curve[i].stddev},
                                  {"mean_score", curve[i].mean_score},
                                  {"n", curve[i].n},
                                  {"missing", curve[i].missing}});
            if (!curve[i].missing) {
                sums[i] += curve[i].mean_score;
                counts[i] += 1;
            }
        }
        per_example.push_back(json{{"id", rec.id}, {"points", points}});
    }

    json mean_curve = json::array();
    for (std::size_t i = 0; i < ctx.config.noise_stds.size(); ++i) {
        mean_curve.push_back(json{{"std", ctx.config.noise_stds[i]},
                                  {"mean_score", counts[i] ? sums[i] / counts[i] : 0.0},
                                  {"n_examples", counts[i]},
                                  {"missing", counts[i] == 0}});
    }
    io::atomic_write_json(ctx.run_dir / "noise_sweep.json",
                          json{{"points", mean_curve}, {"per_example", per_example}});
    log_line(ctx.run_dir, "noise-sweep",
             "swept " + std::to_string(per_example.size()) + " examples over " +
                 std::to_string(ctx.config.noise_stds.size()) + " noise levels");
    return {0, "noise-sweep: " + std::to_string(per_example.size()) + " examples"};
}

StageOutcome stage_report(const RunContext& ctx) {
    const fs::path report_path = ctx.run_dir / "report.json";
    if (!fs::exists(report_path))
        throw ValidationError("no report.json in " + ctx.run_dir.string() +
                                  "; run `coa evaluate` first",
                              {"<pipeline order>"});
    const json eval_report = io::read_json(report_path);
    json plot_data = json::object();
    std::vector<std::string> notes;

    // Mean loss per step across traces.
    {
        std::vector<double> sums;
        std::vector<int> counts;
        const fs::path traces = ctx.run_dir / "traces";
        if (fs::is_directory(traces)) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(traces))
                if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                for (const auto& line : io::read_jsonl(f)) {
                    const int step = line.at("step").get<int>();
                    if (static_cast<std::size_t>(step) >= sums.size()) {
                        sums.resize(step + 1, 0.0);
                        counts.resize(step + 1, 0);
                    }
                    sums[step] += line.at("loss").get<double>();
                    counts[step] += 1;
                }
            }
        }
        if (!sums.empty()) {
            report::Series series;
            series.label = "mean loss";
            for (std::size_t i = 0; i < sums.size(); ++i) {
                if (!counts[i]) continue;
                series.xs.push_back(static_cast<double>(i));
                series.ys.push_back(sums[i] / counts[i]);
            }
            report::render_line_chart(ctx.run_dir / "plots" / "loss_vs_step.png",
                                      "TCM loss over attack steps", "step", "loss", {series});
            plot_data["loss_vs_step"] = json{{"xs", series.xs}, {"ys", series.ys}};
        } else {
            notes.push_back("no traces found; loss-vs-step plot skipped");
        }
    }

    // Noise sensitivity, when the sweep ran.
    if (fs::exists(ctx.run_dir / "noise_sweep.json")) {
        const json sweep = io::read_json(ctx.run_dir / "noise_sweep.json");
        report::Series series;
        series.label = "mean score vs target";
        for (const auto& point : sweep.at("points")) {
            if (point.value("missing", false)) continue;
            series.xs.push_back(point.at("std").get<double>());
            series.ys.push_back(point.at("mean_score").get<double>());
        }
        if (!series.xs.empty()) {
            report::render_line_chart(ctx.run_dir / "plots" / "noise_sensitivity.png",
                                      "Gaussian-noise sensitivity", "noise std",
                                      "ensemble score", {series});
            plot_data["noise_sensitivity"] = json{{"xs", series.xs}, {"ys", series.ys}};
        } else if (sweep.contains("note")) {
            notes.push_back(sweep.at("note").get<std::string>());
        }
    }

    // Summary.
    std::ostringstream md;
    md << "# Run report: " << ctx.run_dir.filename().string() << "\n\n";
    const json& agg = eval_report.at("aggregate");
    md << "- examples scored: " << agg.at("n_examples") << "\n";
    md << "- ensemble score (adversarial): "
       << report::format_score(agg.at("ensemble_mean").get<double>()) << "\n";
    if (!eval_report.at("clean_baseline").is_null()) {
        md << "- ensemble score (clean baseline): "
           << report::format_score(eval_report.at("clean_baseline")
                                       .at("aggregate")
                                       .at("ensemble_mean")
                                       .get<double>())
           << "\n";
    }
    md << "- target ASR: " << report::format_score(agg.at("target_asr").get<double>() * 100.0)
       << "\n";
    md << "- fool rate: " << report::format_score(agg.at("fool_rate").get<double>() * 100.0)
       << "\n";
    md << "- mean judge score: " << agg.at("mean_judge_score") << "\n";
    md << "- judge errors: " << agg.at("n_judge_errors") << "\n\n";
    for (const auto& note : notes) md << "note: " << note << "\n";

    io::atomic_write_json(ctx.run_dir / "plots" / "plot_data.json", plot_data);
    io::atomic_write_text(ctx.run_dir / "summary.md", md.str());
    log_line(ctx.run_dir, "report", "report rendered");
    return {0, "report: rendered"};
}

// Cross-run aggregation: one score-vs-eps plot in the base run directory
// from every sweep sibling with a finished evaluation.
void aggregate_eps_plot(const std::vector<RunContext>& contexts, std::vector<std::string>& notes) {
    struct Point {
        double eps;
        double score;
    };
    std::vector<Point> points;
    for (const auto& ctx : contexts) {
        const fs::path report_path = ctx.run_dir / "report.json";
        if (!fs::exists(report_path)) continue;
        const json doc = io::read_json(report_path);
        points.push_back(Point{ctx.config.attack.eps,
                               doc.at("aggregate").at("ensemble_mean").get<double>()});
    }
    if (contexts.size() <= 1) {
        notes.push_back("sweep section empty; score-vs-eps plot skipped");
        return;
    }
    if (points.size() < 2) {
        notes.push_back("fewer than two evaluated runs; score-vs-eps plot skipped");
        return;
    }
    std::sort(points.begin(), points.end(),
              [](const Point& a, const Point& b) { return a.eps < b.eps; });
    report::Series series;
    series.label = "ensemble score";
    for (const auto& p : points) {
        series.xs.push_back(p.eps);
        series.ys.push_back(p.score);
    }
    const fs::path base = contexts.front().run_dir;
    report::render_line_chart(base / "plots" / "score_vs_eps.png",
                              "Ensemble score vs perturbation budget", "eps",
                              "ensemble score", {series});
    json plot_data = json::object();
    if (fs::exists(base / "plots" / "plot_data.json"))
        plot_data = io::read_json(base / "plots" / "plot_data.json");
    plot_data["score_vs_eps"] = json{{"xs", series.xs}, {"ys", series.ys}};
    io::atomic_write_json(base / "plots" / "plot_data.json", plot_data);
}

using StageFn = StageOutcome (*)(const RunContext&);

StageOutcome run_command(const fs::path& config_path, const fs::path& run_dir,
                         std::optional<uint64_t> seed, std::optional<int> workers,
                         const std::string& stage_name, StageFn stage) {
    RunConfig base;
    try {
        base = load_run_config(config_path, seed, workers);
    } catch (const ValidationError& e) {
        std::string msg = std::string(e.what()) + "; offending keys:";
        for (const auto& k : e.keys()) msg += " " + k;
        return {2, msg};
    }

    std::vector<RunContext> contexts;
    try {
        contexts = expand_sweep(base, run_dir);
    } catch (const ValidationError& e) {
        std::string msg = std::string("sweep override invalid: ") + e.what() + "; keys:";
        for (const auto& k : e.keys()) msg += " " + k;
        return {2, msg};
    }

    int worst = 0;
    std::string message;
    for (const auto& ctx : contexts) {
        std::string prefix = "[" + ctx.run_dir.filename().string() + "] ";
        try {
            RunManifest manifest = RunManifest::open(ctx.run_dir, ctx.config.snapshot);
            if (manifest.stage_done(stage_name)) {
                message += prefix + stage_name + ": skipped (already done)\n";
                continue;
            }
            const StageOutcome outcome = stage(ctx);
            manifest.mark(stage_name, outcome.exit_code == 2 ? "failed" : "done");
            worst = std::max(worst, outcome.exit_code);
            message += prefix + outcome.message + "\n";
        } catch (const ValidationError& e) {
            worst = std::max(worst, 2);
            std::string msg = e.what();
            for (const auto& k : e.keys()) msg += " [" + k + "]";
            message += prefix + msg + "\n";
        } catch (const std::exception& e) {
            try {
                RunManifest::open(ctx.run_dir, ctx.config.snapshot).mark(stage_name, "failed");
            } catch (...) {
            }
            worst = std::max(worst, 2);
            message += prefix + stage_name + " failed: " + e.what() + "\n";
        }
    }

    if (stage_name == "report" && worst == 0) {
        std::vector<std::string> notes;
        try {
            aggregate_eps_plot(contexts, notes);
        } catch (const std::exception& e) {
            notes.push_back(std::string("eps aggregation failed: ") + e.what());
        }
        for (const auto& n : notes) message += "[sweep] " + n + "\n";
    }
    return {worst, message};
}

}  // namespace

StageOutcome cmd_prepare(const fs::path& config_path, const fs::path& run_dir,
                         std::optional<uint64_t> seed, std::optional<int> workers) {
    return run_command(config_path, run_dir, seed, workers, "prepare", stage_prepare);
}

StageOutcome cmd_attack(const fs::path& config_path, const fs::path& run_dir,
                        std::optional<uint64_t> seed, std::optional<int> workers) {
    return run_command(config_path, run_dir, seed, workers, "attack", stage_attack);
}

StageOutcome cmd_evaluate(const fs::path& config_path, const fs::path& run_dir,
                          std::optional<uint64_t> seed, std::optional<int> workers) {
    return run_command(config_path, run_dir, seed, workers, "evaluate", stage_evaluate);
}

StageOutcome cmd_noise_sweep(const fs::path& config_path, const fs::path& run_dir,
                             std::optional<uint64_t> seed, std::optional<int> workers) {
    return run_command(config_path, run_dir, seed, workers, "noise-sweep", stage_noise_sweep);
}

StageOutcome cmd_report(const fs::path& config_path, const fs::path& run_dir,
                        std::optional<uint64_t> seed, std::optional<int> workers) {
    return run_command(config_path, run_dir, seed, workers, "report", stage_report);
}

}  // namespace coa
