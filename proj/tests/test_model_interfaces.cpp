#include "doctest.h"

#include <cmath>

#include "coa/errors.hpp"
#include "coa/kernels.hpp"
#include "coa/toy_backends.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace coa;

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    return kernels::dot(a, b) / (kernels::l2_norm(a) * kernels::l2_norm(b));
}

std::vector<std::string> fixture_captions() {
    return {"a bird perched on a branch in the park",
            "two young boys playing baseball on a field",
            "a close up of a vase with flowers",
            "a cat sleeping on a sunny windowsill"};
}

struct ToyWorld {
    TensorShape shape{12, 12, 3};
    std::shared_ptr<ToyImageEncoder> encoder =
        std::make_shared<ToyImageEncoder>(32, shape, 777);
    std::shared_ptr<ToyTextToImage> renderer =
        std::make_shared<ToyTextToImage>(encoder);
    std::shared_ptr<ToyCaptioner> captioner =
        std::make_shared<ToyCaptioner>(encoder, renderer, fixture_captions());
};

}  // namespace

TEST_SUITE("model_interfaces") {

TEST_CASE("toy image encoder is linear: zero image maps to the zero vector") {
    ToyWorld w;
    const auto zero = w.encoder->encode(ImageTensor::zeros(12, 12, 3));
    for (double v : zero.values) CHECK(v == 0.0);
}

TEST_CASE("toy image encoder is homogeneous") {
    ToyWorld w;
    const ImageTensor x = testing::random_interior_image(12, 12, 3, 4, 0.0, 0.5);
    const ImageTensor x2 = ImageTensor::generate(12, 12, 3, [&](std::size_t i) {
        return 2.0 * x.pixels()[i];
    });
    const auto e1 = w.encoder->encode(x);
    const auto e2 = w.encoder->encode(x2);
    for (std::size_t i = 0; i < e1.values.size(); ++i)
        CHECK(e2.values[i] == doctest::Approx(2.0 * e1.values[i]).epsilon(1e-12));
}

TEST_CASE("toy image encoder ignores constant brightness shifts") {
    ToyWorld w;
    const ImageTensor x = testing::random_interior_image(12, 12, 3, 5, 0.2, 0.6);
    const ImageTensor shifted = ImageTensor::generate(12, 12, 3, [&](std::size_t i) {
        return x.pixels()[i] + 0.2;
    });
    const auto e1 = w.encoder->encode(x);
    const auto e2 = w.encoder->encode(shifted);
    for (std::size_t i = 0; i < e1.values.size(); ++i)
        CHECK(e2.values[i] == doctest::Approx(e1.values[i]).epsilon(1e-9));
}

TEST_CASE("toy encoder VJP matches central finite differences") {
    ToyWorld w;
    const ImageTensor x = testing::random_interior_image(12, 12, 3, 6);
    std::vector<double> cotangent(32);
    kernels::uniform_fill(cotangent, -1.0, 1.0, 17);

    const auto vjp = w.encoder->vjp_handle();
    REQUIRE(vjp.has_value());
    const auto analytic = vjp->apply(x, cotangent);

    // Finite differences of f(pixels) = <encode(pixels), cotangent>.
    const std::vector<double> base(x.pixels().begin(), x.pixels().end());
    const auto loss_fn = [&](const std::vector<double>& px) {
        const ImageTensor img(12, 12, 3, px);
        const auto emb = w.encoder->encode(img).values;
        double acc = 0.0;
        for (std::size_t i = 0; i < emb.size(); ++i) acc += emb[i] * cotangent[i];
        return acc;
    };
    const auto numeric = oracles::finite_difference_gradient(loss_fn, base, 1e-6);

    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        norm += numeric[i] * numeric[i];
    }
    CHECK(std::sqrt(diff) / std::sqrt(norm) < 1e-6);
}

TEST_CASE("toy text encoder: identical and whitespace-normalized strings map identically") {
    const ToyTextEncoder enc(64, 42);
    const auto a = enc.encode("a cat sleeping on a sunny windowsill");
    const auto b = enc.encode("  a   cat sleeping on a sunny\twindowsill ");
    CHECK(a.values == b.values);
}

TEST_CASE("toy text encoder: distinct codebook captions have cosine below one") {
    const ToyTextEncoder enc(64, 42);
    const auto caps = fixture_captions();
    for (std::size_t i = 0; i < caps.size(); ++i)
        for (std::size_t j = i + 1; j < caps.size(); ++j) {
            const auto a = enc.encode(caps[i]);
            const auto b = enc.encode(caps[j]);
            CHECK(cosine(a.values, b.values) < 1.0 - 1e-9);
        }
}

TEST_CASE("toy text encoder: bucket-disjoint texts are exactly orthogonal") {
    const ToyTextEncoder enc(64, 7);
    // find two tokens landing in different buckets
    std::string t1 = "alpha", t2;
    for (const char* candidate : {"bravo", "carrot", "delta", "野", "zulu"}) {
        if (enc.bucket_of(candidate) != enc.bucket_of(t1)) {
            t2 = candidate;
            break;
        }
    }
    REQUIRE(!t2.empty());
    const auto a = enc.encode(t1);
    const auto b = enc.encode(t2);
    CHECK(kernels::dot(a.values, b.values) == 0.0);
}

TEST_CASE("toy text encoder rejects empty text") {
    const ToyTextEncoder enc(16, 1);
    CHECK_THROWS_AS(enc.encode(""), InputError);
    CHECK_THROWS_AS(enc.encode("   \t\n"), InputError);
}

TEST_CASE("toy text-to-image is deterministic per (text, seed) and distinct across texts") {
    ToyWorld w;
    const auto a1 = w.renderer->generate("a red truck beside a barn", 5);
    const auto a2 = w.renderer->generate("a red truck beside a barn", 5);
    CHECK(std::vector<double>(a1.pixels().begin(), a1.pixels().end()) ==
          std::vector<double>(a2.pixels().begin(), a2.pixels().end()));

    const auto b = w.renderer->generate("a red truck beside a barn", 6);
    CHECK(std::vector<double>(a1.pixels().begin(), a1.pixels().end()) !=
          std::vector<double>(b.pixels().begin(), b.pixels().end()));

    // pairwise distinct over the fixture pool at a fixed seed
    const auto caps = fixture_captions();
    for (std::size_t i = 0; i < caps.size(); ++i)
        for (std::size_t j = i + 1; j < caps.size(); ++j) {
            const auto x = w.renderer->generate(caps[i], 3);
            const auto y = w.renderer->generate(caps[j], 3);
            CHECK(std::vector<double>(x.pixels().begin(), x.pixels().end()) !=
                  std::vector<double>(y.pixels().begin(), y.pixels().end()));
        }
}

TEST_CASE("toy text-to-image rejects empty text") {
    ToyWorld w;
    CHECK_THROWS_AS(w.renderer->generate("", 0), InputError);
}

TEST_CASE("toy captioner recognizes canonical renders of its codebook") {
    ToyWorld w;
    for (const auto& caption : w.captioner->codebook()) {
        const ImageTensor render = w.renderer->generate(caption, 0);
        CHECK(w.captioner->caption(render) == caption);
    }
}

TEST_CASE("toy captioner is deterministic and crosses codebook boundaries") {
    ToyWorld w;
    const auto caps = fixture_captions();
    const ImageTensor r0 = w.renderer->generate(caps[0], 0);
    const ImageTensor r2 = w.renderer->generate(caps[2], 0);
    CHECK(w.captioner->caption(r0) == w.captioner->caption(r0));

    // moving from one render to another flips the caption somewhere in between
    CHECK(w.captioner->caption(r0) == caps[0]);
    CHECK(w.captioner->caption(r2) == caps[2]);
    const ImageTensor mid = ImageTensor::generate(12, 12, 3, [&](std::size_t i) {
        return 0.5 * r0.pixels()[i] + 0.5 * r2.pixels()[i];
    });
    const std::string mid_caption = w.captioner->caption(mid);
    CHECK((mid_caption == caps[0] || mid_caption == caps[2]));
}

TEST_CASE("toy captioner rejects duplicate or empty codebook entries") {
    ToyWorld w;
    CHECK_THROWS_AS(ToyCaptioner(w.encoder, w.renderer, {"a", "a"}), InputError);
    CHECK_THROWS_AS(ToyCaptioner(w.encoder, w.renderer, {}), InputError);
    CHECK_THROWS_AS(ToyCaptioner(w.encoder, w.renderer, {"ok", "  "}), InputError);
}

TEST_CASE("toy victim delegates to its captioner regardless of prompt") {
    ToyWorld w;
    const ToyVictim victim(w.captioner);
    const ImageTensor img = w.renderer->generate(fixture_captions()[1], 0);
    CHECK(victim.respond(img, "What is the content of this image?") ==
          w.captioner->caption(img));
    CHECK(victim.respond(img, "Describe.") == victim.respond(img, "Anything else?"));
}

TEST_CASE("rule-based judge reproduces the three-level rubric") {
    auto enc = std::make_shared<ToyTextEncoder>(128, 0xbead0f, "judge-enc");
    const RuleBasedJudge judge(enc);
    const std::string clean = "a bird perched on a branch in the park";
    const std::string target = "two young boys playing baseball on a field";

    const auto hit = judge.judge(clean, target, target);
    CHECK(hit.score() == 1.0);
    CHECK(!hit.rationale().empty());

    const auto fooled = judge.judge(clean, "purple submarine orbits quietly", target);
    CHECK(fooled.score() == 0.5);

    const auto failed = judge.judge(clean, clean, target);
    CHECK(failed.score() == 0.0);
}

TEST_CASE("judge rejects empty inputs and verdict rejects off-scale scores") {
    auto enc = std::make_shared<ToyTextEncoder>(128, 1, "judge-enc");
    const RuleBasedJudge judge(enc);
    CHECK_THROWS_AS(judge.judge("", "b", "c"), InputError);
    CHECK_THROWS_AS(JudgeVerdict(0.7, "why"), InputError);
    CHECK_THROWS_AS(JudgeVerdict(1.0, ""), InputError);
}

TEST_CASE("toy key-info extraction drops stopwords deterministically") {
    const std::string sentence =
        "The little girl is taking tennis lesson to learn how to play.";
    CHECK(toy_extract_key_info(sentence) == "little girl taking tennis lesson learn play.");
    CHECK(toy_extract_key_info(sentence) == toy_extract_key_info(sentence));
    // all-stopword input falls back to the canonical text
    CHECK(toy_extract_key_info("the of  an") == "the of an");
}

}  // TEST_SUITE
