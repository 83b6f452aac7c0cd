#include "doctest.h"

#include <cmath>
#include <fstream>

#include "coa/chain.hpp"
#include "coa/io.hpp"
#include "coa/toy_backends.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace coa;
using coa::testing::TempDir;

namespace {

// Bridges an oracle instance into chain backends: explicit encoder matrix, a
// constant captioner and a lookup text encoder, so the chain and the oracle
// consume identical raw data through disjoint arithmetic.
struct InstanceScene {
    oracles::ToyInstance inst;
    TensorShape shape;
    ToyImageEncoder encoder;
    testing::MapTextEncoder text_encoder;
    testing::ConstCaptioner captioner;
    ImageTextPair clean_pair;
    ImageTextPair target_pair;
    AttackConfig config;

    explicit InstanceScene(const oracles::ToyInstance& instance)
        : inst(instance),
          shape{inst.height, inst.width, inst.channels},
          encoder(inst.dim, shape, inst.encoder_matrix),
          text_encoder(inst.dim,
                       {{"clean-text", inst.clean_text_embedding},
                        {"target-text", inst.target_text_embedding},
                        {"oracle-caption", inst.caption_embedding}}),
          captioner("oracle-caption"),
          clean_pair{ImageTensor(inst.height, inst.width, inst.channels, inst.clean_image),
                     "clean-text", "clean-ref"},
          target_pair{ImageTensor(inst.height, inst.width, inst.channels, inst.target_image),
                      "target-text", "target-ref"} {
        config.eps = inst.eps;
        config.step_size_eta = inst.eta;
        config.pgd_steps = inst.pgd_steps;
        config.alpha = inst.alpha;
        config.beta = inst.beta;
        config.gamma = inst.gamma;
        config.caption_refresh_interval = inst.pgd_steps + 1;  // caption fixed after step 0
        config.rng_seed = inst.seed;
    }

    AttackBackends backends() const {
        return AttackBackends{&encoder, &text_encoder, &captioner};
    }
};

// Small self-consistent toy universe for end-to-end chain tests.
struct MiniUniverse {
    TensorShape shape{16, 16, 3};
    std::vector<std::string> pool = {"a bird perched on a branch in the park",
                                     "two young boys playing baseball on a field",
                                     "a close up of a vase with flowers",
                                     "a cat sleeping on a sunny windowsill"};
    std::shared_ptr<ToyImageEncoder> encoder =
        std::make_shared<ToyImageEncoder>(32, shape, 4096);
    std::shared_ptr<ToyTextToImage> renderer = std::make_shared<ToyTextToImage>(encoder);
    std::shared_ptr<ToyCaptioner> captioner =
        std::make_shared<ToyCaptioner>(encoder, renderer, pool);
    ToyTextEncoder text_encoder{32, 0x5eed};

    AttackBackends backends() const {
        return AttackBackends{encoder.get(), &text_encoder, captioner.get()};
    }

    BatchExample make_example(const std::string& id, uint64_t seed, int target_index) const {
        const ImageTensor clean = testing::random_interior_image(16, 16, 3, seed);
        const std::string clean_text = captioner->caption(clean);
        const std::string target_text = pool[target_index];
        const ImageTensor target_img = renderer->generate(target_text, 0);
        return BatchExample{id,
                            ImageTextPair{clean, clean_text, "clean:" + id},
                            ImageTextPair{target_img, target_text, "target:" + id}};
    }
};

AttackConfig mini_config() {
    AttackConfig cfg;
    cfg.eps = 8.0 / 255.0;
    cfg.step_size_eta = 1.0 / 255.0;
    cfg.pgd_steps = 30;
    cfg.alpha = 0.5;
    cfg.beta = 0.4;
    cfg.gamma = 0.6;
    cfg.rng_seed = 11;
    return cfg;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("chain") {

TEST_CASE("zero budget: adversarial image equals the clean image, captions stay clean") {
    MiniUniverse u;
    const ImageTensor clean = testing::random_interior_image(16, 16, 3, 21);
    const std::string clean_caption = u.captioner->caption(clean);

    AttackConfig cfg = mini_config();
    cfg.eps = 0.0;
    cfg.pgd_steps = 6;

    const ImageTextPair clean_pair{clean, clean_caption, "c"};
    const ImageTextPair target_pair{u.renderer->generate(u.pool[2], 0), u.pool[2], "t"};
    const AdversarialArtifact art = run_chain(clean_pair, target_pair, cfg, u.backends());

    CHECK(std::vector<double>(art.adv_image.pixels().begin(), art.adv_image.pixels().end()) ==
          std::vector<double>(clean.pixels().begin(), clean.pixels().end()));
    for (const auto& rec : art.trace) CHECK(rec.caption == clean_caption);
    CHECK(art.final_caption == clean_caption);
}

TEST_CASE("single-pixel chain matches exhaustive search over the two corners") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const auto inst = oracles::make_toy_instance(seed, /*n_pixels=*/1);
        InstanceScene scene(inst);
        const AdversarialArtifact art =
            run_chain(scene.clean_pair, scene.target_pair, scene.config, scene.backends());

        const double lo = oracles::oracle_tcm_loss(inst, {-inst.eps});
        const double hi = oracles::oracle_tcm_loss(inst, {+inst.eps});
        CHECK(art.final_loss == doctest::Approx(std::max(lo, hi)).epsilon(1e-9));
    }
}

TEST_CASE("chain final loss reaches the brute-force corner optimum on small instances") {
    for (uint64_t seed : {10ull, 11ull, 12ull}) {
        const auto inst = oracles::make_toy_instance(seed, 10);
        InstanceScene scene(inst);
        const AdversarialArtifact art =
            run_chain(scene.clean_pair, scene.target_pair, scene.config, scene.backends());
        const auto best = oracles::brute_force_linf_optimum(inst);
        CHECK(std::abs(art.final_loss - best.best_loss) < 1e-9);
    }
}

TEST_CASE("end-to-end toy run moves the embedding toward the target") {
    MiniUniverse u;
    const BatchExample ex = u.make_example("e2e", 31, 2);
    const AdversarialArtifact art =
        run_chain(ex.clean, ex.target, mini_config(), u.backends());
    REQUIRE(art.trace.size() == 30);
    CHECK(art.trace.back().sim_target > art.trace.front().sim_target);
    CHECK(art.final_caption == u.pool[2]);
}

TEST_CASE("budget invariant holds at every recorded step") {
    MiniUniverse u;
    const BatchExample ex = u.make_example("budget", 32, 1);
    AttackConfig cfg = mini_config();
    const AdversarialArtifact art = run_chain(ex.clean, ex.target, cfg, u.backends());
    for (const auto& rec : art.trace) CHECK(rec.delta_linf <= cfg.eps + 1e-15);
    for (std::size_t i = 0; i < art.adv_image.size(); ++i)
        CHECK(std::abs(art.adv_image.pixels()[i] - ex.clean.image.pixels()[i]) <=
              cfg.eps + 1e-12);
}

TEST_CASE("sign updates saturate every coordinate at the budget") {
    // interior pixels, fixed caption, enough steps for eps/eta saturation
    const auto inst = oracles::make_toy_instance(20, 8);
    InstanceScene scene(inst);
    const AdversarialArtifact art =
        run_chain(scene.clean_pair, scene.target_pair, scene.config, scene.backends());
    for (std::size_t i = 0; i < art.adv_image.size(); ++i) {
        const double moved =
            std::abs(art.adv_image.pixels()[i] - scene.clean_pair.image.pixels()[i]);
        CHECK(moved == doctest::Approx(inst.eps).epsilon(1e-9));
    }
}

TEST_CASE("trace length equals pgd_steps and refresh steps carry fresh captions") {
    MiniUniverse u;
    const BatchExample ex = u.make_example("refresh", 33, 0);
    AttackConfig cfg = mini_config();
    cfg.pgd_steps = 10;
    cfg.caption_refresh_interval = 3;

    const testing::CountingCaptioner counting(*u.captioner);
    AttackBackends backends = u.backends();
    backends.captioner = &counting;

    const AdversarialArtifact art = run_chain(ex.clean, ex.target, cfg, backends);
    REQUIRE(art.trace.size() == 10);
    for (int step = 0; step < 10; ++step) CHECK(art.trace[step].step == step);

    // refresh steps 0,3,6,9 -> captioner outputs in order; plus the final call
    CHECK(counting.calls() == 5);
    const auto& outs = counting.outputs();
    CHECK(art.trace[0].caption == outs[0]);
    CHECK(art.trace[3].caption == outs[1]);
    CHECK(art.trace[6].caption == outs[2]);
    CHECK(art.trace[9].caption == outs[3]);
    // non-refresh steps reuse the previous caption
    CHECK(art.trace[1].caption == art.trace[0].caption);
    CHECK(art.trace[2].caption == art.trace[0].caption);
    CHECK(art.trace[4].caption == art.trace[3].caption);
}

TEST_CASE("mid-chain backend failure aborts with the partial trace") {
    MiniUniverse u;
    const BatchExample ex = u.make_example("abort", 34, 1);
    AttackConfig cfg = mini_config();
    cfg.pgd_steps = 8;

    testing::CountingCaptioner failing(*u.captioner);
    failing.fail_on_call = 3;
    AttackBackends backends = u.backends();
    backends.captioner = &failing;

    try {
        run_chain(ex.clean, ex.target, cfg, backends);
        FAIL("expected ChainAbortedError");
    } catch (const ChainAbortedError& e) {
        CHECK(e.step() == 2);
        CHECK(e.partial_trace().size() == 2);
    }
}

TEST_CASE("an empty captioner output carries the previous caption and warns") {
    MiniUniverse u;
    const BatchExample ex = u.make_example("empty-cap", 36, 2);

    struct EmptyCaptioner : Captioner {
        std::string name() const override { return "empty-captioner"; }
        std::string caption(const ImageTensor&) const override { return "  "; }
    };
    const EmptyCaptioner silent;
    AttackBackends backends = u.backends();
    backends.captioner = &silent;

    AttackConfig cfg = mini_config();
    cfg.pgd_steps = 4;
    const AdversarialArtifact art = run_chain(ex.clean, ex.target, cfg, backends);
    for (const auto& rec : art.trace) CHECK(rec.caption == ex.clean.text);
    CHECK(!art.warnings.empty());
    CHECK(art.warnings[0].find("empty caption") != std::string::npos);
}

TEST_CASE("clean and target shapes must agree") {
    MiniUniverse u;
    const BatchExample ex = u.make_example("shape", 35, 0);
    const ImageTextPair bad_target{ImageTensor::zeros(8, 8, 3), "t", "t"};
    CHECK_THROWS_AS(run_chain(ex.clean, bad_target, mini_config(), u.backends()),
                    ShapeError);
}

TEST_CASE("run_batch: empty example list produces an empty summary and no artifacts") {
    TempDir tmp;
    MiniUniverse u;
    const BatchSummary summary = run_batch({}, mini_config(), u.backends(), tmp.path());
    CHECK(summary.succeeded == 0);
    CHECK(summary.failed == 0);
    CHECK(summary.outcomes.empty());
    CHECK(std::filesystem::is_empty(tmp.path() / "adv"));
    CHECK(std::filesystem::is_empty(tmp.path() / "traces"));
}

TEST_CASE("run_batch isolates per-example failures") {
    TempDir tmp;
    MiniUniverse u;

    // captioner that rejects anything inside the budget ball of one image
    struct MarkedFailCaptioner : Captioner {
        const Captioner* inner;
        std::vector<double> marked;
        std::string name() const override { return "marked-fail"; }
        std::string caption(const ImageTensor& image) const override {
            double dist = 0.0;
            for (std::size_t i = 0; i < marked.size(); ++i)
                dist = std::max(dist, std::abs(image.pixels()[i] - marked[i]));
            if (dist < 0.2) throw BackendError("marked image rejected");
            return inner->caption(image);
        }
    };

    std::vector<BatchExample> examples = {u.make_example("a", 41, 0),
                                          u.make_example("b", 42, 1),
                                          u.make_example("c", 43, 2)};
    MarkedFailCaptioner captioner;
    captioner.inner = u.captioner.get();
    captioner.marked.assign(examples[1].clean.image.pixels().begin(),
                            examples[1].clean.image.pixels().end());

    AttackBackends backends = u.backends();
    backends.captioner = &captioner;
    AttackConfig cfg = mini_config();
    cfg.pgd_steps = 5;

    const BatchSummary summary = run_batch(examples, cfg, backends, tmp.path());
    CHECK(summary.succeeded == 2);
    CHECK(summary.failed == 1);
    CHECK(summary.outcomes[1].ok == false);
    CHECK(!summary.outcomes[1].error.empty());
    CHECK(std::filesystem::exists(tmp.path() / "adv" / "a.png"));
    CHECK(std::filesystem::exists(tmp.path() / "adv" / "c.png"));
    CHECK(!std::filesystem::exists(tmp.path() / "adv" / "b.png"));
    // the failure is recorded in the summary file as well
    const auto lines = io::read_jsonl(tmp.path() / "attack_summary.jsonl");
    REQUIRE(lines.size() == 3);
    CHECK(lines[1].at("ok").get<bool>() == false);
}

TEST_CASE("run_batch replays byte-identically for a fixed seed") {
    TempDir t1, t2;
    MiniUniverse u;
    std::vector<BatchExample> examples = {u.make_example("x", 51, 0),
                                          u.make_example("y", 52, 3)};
    AttackConfig cfg = mini_config();
    cfg.pgd_steps = 12;

    run_batch(examples, cfg, u.backends(), t1.path());
    run_batch(examples, cfg, u.backends(), t2.path());

    for (const char* rel : {"attack_summary.jsonl", "traces/x.jsonl", "traces/y.jsonl",
                            "adv/x.png", "adv/y.png", "adv/x.json", "adv/y.json"})
        CHECK(file_bytes(t1.path() / rel) == file_bytes(t2.path() / rel));
}

TEST_CASE("run_batch writes the sidecar metadata schema") {
    TempDir tmp;
    MiniUniverse u;
    const std::vector<BatchExample> examples = {u.make_example("s", 61, 1)};
    AttackConfig cfg = mini_config();
    cfg.pgd_steps = 4;
    run_batch(examples, cfg, u.backends(), tmp.path());

    const auto meta = io::read_json(tmp.path() / "adv" / "s.json");
    for (const char* key :
         {"clean_image_path", "eps", "step_size", "steps", "seed", "final_loss"})
        CHECK(meta.contains(key));
    CHECK(meta.size() == 6);
    CHECK(meta.at("steps").get<int>() == 4);

    // trace lines carry exactly the six contract keys
    const auto lines = io::read_jsonl(tmp.path() / "traces" / "s.jsonl");
    REQUIRE(lines.size() == 4);
    for (const auto& line : lines) {
        CHECK(line.size() == 6);
        for (const char* key :
             {"step", "caption", "loss", "sim_target", "sim_clean", "delta_linf"})
            CHECK(line.contains(key));
    }
}

}  // TEST_SUITE
