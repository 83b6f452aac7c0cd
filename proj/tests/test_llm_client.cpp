#include "doctest.h"

#include <atomic>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "coa/dataprep.hpp"
#include "coa/llm_client.hpp"
#include "test_support.hpp"

using namespace coa;

namespace {

// Local chat-completions stand-in for adapter tests.
class LocalServer {
public:
    explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler)
        : handler_(std::move(handler)) {
        port_ = server_.bind_to_any_port("127.0.0.1");
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handler_(req, res);
                     });
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::function<void(const httplib::Request&, httplib::Response&)> handler_;
    int port_ = 0;
    std::thread thread_;
};

std::string chat_body(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump();
}

HttpChatConfig fast_config(const std::string& endpoint) {
    HttpChatConfig cfg;
    cfg.endpoint = endpoint;
    cfg.model = "test-model";
    cfg.api_key = "sk-test";
    cfg.retry.attempts = 3;
    cfg.retry.initial_backoff_ms = 1;
    cfg.timeout_seconds = 5;
    return cfg;
}

}  // namespace

TEST_SUITE("llm_client") {

TEST_CASE("judge score parser reads the last SCORE line") {
    CHECK(parse_judge_score("reasoning...\nSCORE: 1") == 1.0);
    CHECK(parse_judge_score("SCORE: 0.5") == 0.5);
    CHECK(parse_judge_score("  SCORE:   0  ") == 0.0);
    CHECK(parse_judge_score("SCORE: 1.") == 1.0);
    CHECK(parse_judge_score("SCORE: 0\nmore thoughts\nSCORE: 1") == 1.0);
    CHECK(!parse_judge_score("score: 1").has_value());  // prefix is case-sensitive
    CHECK(!parse_judge_score("SCORE: 2").has_value());
    CHECK(!parse_judge_score("SCORE: 0.75").has_value());
    CHECK(!parse_judge_score("no verdict at all").has_value());
    CHECK(!parse_judge_score("").has_value());
}

TEST_CASE("llm judge returns the parsed verdict with the full response as rationale") {
    const testing::FakeLlmClient client({"The texts match closely.\nSCORE: 1"});
    const LlmJudge judge(client);
    const auto verdict = judge.judge("clean text", "generated text", "target text");
    CHECK(verdict.score() == 1.0);
    CHECK(verdict.rationale().find("match closely") != std::string::npos);
    CHECK(client.calls() == 1);
    CHECK(client.last_user.find("generated text") != std::string::npos);
    CHECK(client.last_system.find("SCORE: <0|0.5|1>") != std::string::npos);
}

TEST_CASE("llm judge re-queries on malformed output, then fails loudly") {
    const testing::FakeLlmClient flaky({"no score here", "still broken", "SCORE: 0.5"});
    const LlmJudge judge(flaky, 3);
    const auto verdict = judge.judge("c", "g", "t");
    CHECK(verdict.score() == 0.5);
    CHECK(flaky.calls() == 3);

    const testing::FakeLlmClient hopeless({"nothing"});
    const LlmJudge strict(hopeless, 3);
    CHECK_THROWS_AS(strict.judge("c", "g", "t"), JudgeParseError);
    CHECK(hopeless.calls() == 3);
}

TEST_CASE("llm judge validates inputs") {
    const testing::FakeLlmClient client({"SCORE: 1"});
    const LlmJudge judge(client);
    CHECK_THROWS_AS(judge.judge("", "g", "t"), InputError);
}

TEST_CASE("http chat client round-trips a completion") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        const auto body = nlohmann::json::parse(req.body);
        CHECK(body.at("model") == "test-model");
        REQUIRE(body.at("messages").size() == 2);
        CHECK(body.at("messages")[0].at("role") == "system");
        CHECK(body.at("messages")[1].at("role") == "user");
        CHECK(req.get_header_value("Authorization") == "Bearer sk-test");
        res.set_content(chat_body("echo: " +
                                  body.at("messages")[1].at("content").get<std::string>()),
                        "application/json");
    });

    std::vector<std::string> digests;
    HttpChatConfig cfg = fast_config(server.endpoint());
    cfg.digest_sink = [&](const std::string& line) { digests.push_back(line); };
    const HttpChatClient client(cfg);
    CHECK(client.complete("sys", "hello") == "echo: hello");
    CHECK(hits == 1);
    REQUIRE(digests.size() == 1);
    CHECK(digests[0].find("status=200") != std::string::npos);
}

TEST_CASE("http chat client retries transient failures with capped attempts") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
        } else {
            res.set_content(chat_body("recovered"), "application/json");
        }
    });
    const HttpChatClient client(fast_config(server.endpoint()));
    CHECK(client.complete("s", "u") == "recovered");
    CHECK(hits == 3);
}

TEST_CASE("http chat client surfaces persistent failure as BackendError with attempts") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    const HttpChatClient client(fast_config(server.endpoint()));
    try {
        client.complete("s", "u");
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.attempts() == 3);
        CHECK(hits == 3);
    }
}

TEST_CASE("http chat client treats malformed bodies as failures") {
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"unexpected\": true}", "application/json");
    });
    const HttpChatClient client(fast_config(server.endpoint()));
    CHECK_THROWS_AS(client.complete("s", "u"), BackendError);
}

TEST_CASE("llm key-info extractor sends the keyword-extraction prompt") {
    const testing::FakeLlmClient client({"A little girl taking tennis lesson."});
    const LlmKeyInfoExtractor extractor(client);
    const std::string out =
        extractor.extract("The little girl is taking tennis lesson to learn how to play.");
    CHECK(out == "A little girl taking tennis lesson.");
    CHECK(client.last_user.find(
              "Extract the keywords/information from the following sentence (save verbs "
              "and objects):") != std::string::npos);
    CHECK(client.last_user.find("The little girl is taking") != std::string::npos);
}

TEST_CASE("chat client validates its configuration") {
    HttpChatConfig cfg;
    cfg.model = "m";
    CHECK_THROWS_AS((HttpChatClient(cfg)), InvalidConfigError);
    cfg.endpoint = "http://x";
    cfg.model = "";
    CHECK_THROWS_AS((HttpChatClient(cfg)), InvalidConfigError);
}

}  // TEST_SUITE
