#include "coa/chain.hpp"

#include <cmath>

#include "coa/fusion.hpp"
#include "coa/io.hpp"
#include "coa/kernels.hpp"
#include "coa/objective.hpp"
#include "coa/rng.hpp"
#include "coa/toy_backends.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace coa {

namespace fs = std::filesystem;

namespace {

void check_backends(const AttackBackends& backends) {
    if (!backends.image_encoder || !backends.text_encoder || !backends.captioner)
        throw InvalidConfigError("run_chain needs image encoder, text encoder and captioner");
    if (!backends.image_encoder->vjp_handle())
        throw CapabilityError("run_chain: image encoder exposes no gradient access");
}

}  // namespace

AdversarialArtifact run_chain(const ImageTextPair& clean_pair,
                              const ImageTextPair& target_pair,
                              const AttackConfig& config,
                              const AttackBackends& backends) {
    config.validate();
    check_backends(backends);
    if (!clean_pair.image.same_shape(target_pair.image))
        throw ShapeError("run_chain: clean and target images differ in shape");

    const ImageEncoder& img_enc = *backends.image_encoder;
    const TextEncoder& txt_enc = *backends.text_encoder;
    const Captioner& captioner = *backends.captioner;

    std::vector<ChainStepRecord> trace;
    trace.reserve(config.pgd_steps);
    std::vector<std::string> warnings;

    int current_step = 0;
    try {
        // Reference embeddings are fixed for the whole chain.
        const ModalityAwareEmbedding f_clean = fuse_modalities(
            img_enc.encode(clean_pair.image), txt_enc.encode(clean_pair.text), config.alpha);
        const ModalityAwareEmbedding f_ref = fuse_modalities(
            img_enc.encode(target_pair.image), txt_enc.encode(target_pair.text), config.alpha);

        Perturbation delta =
            init_perturbation(shape_of(clean_pair.image), config.eps, config.rng_seed);

        std::string caption = clean_pair.text;
        RawEmbedding caption_emb = txt_enc.encode(caption);

        AttackStepContext ctx;
        ctx.clean_image = &clean_pair.image;
        ctx.image_encoder = &img_enc;
        ctx.f_ref = &f_ref;
        ctx.f_clean = &f_clean;
        ctx.alpha = config.alpha;
        ctx.beta = config.beta;
        ctx.gamma = config.gamma;

        for (int step = 0; step < config.pgd_steps; ++step) {
            current_step = step;
            if (step % config.caption_refresh_interval == 0) {
                const ImageTensor adv = apply_perturbation(clean_pair.image, delta);
                std::string fresh = captioner.caption(adv);
                if (canonicalize_text(fresh).empty()) {
                    warnings.push_back("captioner returned empty caption at step " +
                                       std::to_string(step) + "; carrying previous caption");
                } else if (fresh != caption) {
                    caption = std::move(fresh);
                    caption_emb = txt_enc.encode(caption);
                }
            }
            ctx.caption_embedding = &caption_emb;

            const TCMForward fwd = tcm_forward(delta, ctx);
            trace.push_back(ChainStepRecord{step, caption, fwd.breakdown.loss,
                                            fwd.breakdown.sim_target, fwd.breakdown.sim_clean,
                                            delta.linf_norm()});

            const std::vector<double> grad = tcm_gradient(delta, ctx);
            std::vector<double> next(delta.delta().size());
            kernels::sign_step_clamp(delta.delta(), grad, config.step_size_eta, config.eps, next);
            delta = Perturbation(delta.shape(), config.eps, std::move(next));
        }

        ctx.caption_embedding = &caption_emb;
        const TCMForward final_fwd = tcm_forward(delta, ctx);
        std::string final_caption = captioner.caption(final_fwd.adv_image);

        return AdversarialArtifact{final_fwd.adv_image,
                                   std::move(final_caption),
                                   final_fwd.breakdown.loss,
                                   std::move(trace),
                                   config,
                                   clean_pair.ref,
                                   target_pair.ref,
                                   std::move(warnings)};
    } catch (const ChainAbortedError&) {
        throw;
    } catch (const Error& e) {
        throw ChainAbortedError(std::string("chain aborted at step ") +
                                    std::to_string(current_step) + ": " + e.what(),
                                current_step, std::move(trace));
    }
}

namespace {

nlohmann::json trace_line(const ChainStepRecord& rec) {
    return nlohmann::json{{"step", rec.step},         {"caption", rec.caption},
                          {"loss", rec.loss},         {"sim_target", rec.sim_target},
                          {"sim_clean", rec.sim_clean}, {"delta_linf", rec.delta_linf}};
}

void persist_trace(const fs::path& path, const std::vector<ChainStepRecord>& trace) {
    std::vector<nlohmann::json> lines;
    lines.reserve(trace.size());
    for (const auto& rec : trace) lines.push_back(trace_line(rec));
    io::atomic_write_jsonl(path, lines);
}

}  // namespace

BatchSummary run_batch(const std::vector<BatchExample>& examples,
                       const AttackConfig& config,
                       const AttackBackends& backends,
                       const fs::path& run_dir,
                       int workers) {
    config.validate();
    check_backends(backends);

    std::error_code ec;
    fs::create_directories(run_dir / "adv", ec);
    fs::create_directories(run_dir / "traces", ec);
    if (ec || !fs::is_directory(run_dir / "adv") || !fs::is_directory(run_dir / "traces"))
        throw IoError("run directory is not writable: " + run_dir.string());
    // Probe an actual write so permission problems surface before any work.
    try {
        io::atomic_write_text(run_dir / "adv" / ".probe", "");
        fs::remove(run_dir / "adv" / ".probe");
    } catch (const IoError&) {
        throw IoError("run directory is not writable: " + run_dir.string());
    }

    BatchSummary summary;
    summary.outcomes.resize(examples.size());

    int pool = workers > 0 ? workers : 0;
    for (const BackendBase* b :
         {static_cast<const BackendBase*>(backends.image_encoder),
          static_cast<const BackendBase*>(backends.text_encoder),
          static_cast<const BackendBase*>(backends.captioner)}) {
        const int cap = b->max_concurrency();
        if (cap > 0 && (pool == 0 || cap < pool)) pool = cap;
    }

    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(examples.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(pool > 0 ? pool : omp_get_max_threads())
#endif
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const BatchExample& ex = examples[i];
        ExampleOutcome& out = summary.outcomes[i];
        out.id = ex.id;

        AttackConfig per_example = config;
        per_example.rng_seed = derive_seed(config.rng_seed, ex.id, "attack");

        // Summary entries carry run-dir-relative paths so runs are relocatable
        // and replays compare byte-identical.
        const fs::path adv_rel = fs::path("adv") / (ex.id + ".png");
        const fs::path trace_rel = fs::path("traces") / (ex.id + ".jsonl");
        const fs::path adv_path = run_dir / adv_rel;
        const fs::path meta_path = run_dir / "adv" / (ex.id + ".json");
        const fs::path trace_path = run_dir / trace_rel;
        // No exception may escape the parallel region.
        try {
            AdversarialArtifact artifact = run_chain(ex.clean, ex.target, per_example, backends);
            io::save_png(adv_path, artifact.adv_image);

            // The persisted 8-bit image must stay within budget + one
            // quantization step of the clean image.
            const ImageTensor reloaded = io::load_image(adv_path);
            double worst = 0.0;
            const auto a = reloaded.pixels();
            const auto b = ex.clean.image.pixels();
            for (std::size_t k = 0; k < a.size(); ++k)
                worst = std::max(worst, std::abs(a[k] - b[k]));
            if (worst > per_example.eps + 1.0 / 255.0 + 1e-12)
                throw Error("persisted adversarial image exceeds budget after quantization");

            io::atomic_write_json(meta_path,
                                  nlohmann::json{{"clean_image_path", ex.clean.ref},
                                                 {"eps", per_example.eps},
                                                 {"step_size", per_example.step_size_eta},
                                                 {"steps", per_example.pgd_steps},
                                                 {"seed", per_example.rng_seed},
                                                 {"final_loss", artifact.final_loss}});
            persist_trace(trace_path, artifact.trace);

            out.ok = true;
            out.adv_image_path = adv_rel.string();
            out.trace_path = trace_rel.string();
            out.final_caption = artifact.final_caption;
            out.final_loss = artifact.final_loss;
        } catch (const ChainAbortedError& e) {
            out.ok = false;
            out.error = e.what();
            try {
                persist_trace(trace_path, e.partial_trace());
                out.trace_path = trace_rel.string();
            } catch (const std::exception& io_err) {
                out.error += std::string("; partial trace not persisted: ") + io_err.what();
            }
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        } catch (...) {
            out.ok = false;
            out.error = "unknown failure";
        }
    }

    std::vector<nlohmann::json> lines;
    for (const auto& out : summary.outcomes) {
        out.ok ? ++summary.succeeded : ++summary.failed;
        lines.push_back(nlohmann::json{{"id", out.id},
                                       {"ok", out.ok},
                                       {"error", out.error},
                                       {"adv_image_path", out.adv_image_path},
                                       {"trace_path", out.trace_path},
                                       {"final_caption", out.final_caption},
                                       {"final_loss", out.final_loss}});
    }
    io::atomic_write_jsonl(run_dir / "attack_summary.jsonl", lines);
    return summary;
}

}  // namespace coa
