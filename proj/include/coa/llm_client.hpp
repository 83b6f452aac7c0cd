#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "coa/model_interfaces.hpp"

namespace coa {

// Transport retry policy for remote backends. Deterministic local backends
// never retry; remote ones default to 3 attempts with exponential backoff.
struct RetryPolicy {
    int attempts = 3;
    int initial_backoff_ms = 250;
    double multiplier = 2.0;
};

struct HttpChatConfig {
    std::string endpoint;      // e.g. https://host:port
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;       // resolved by the caller (environment)
    RetryPolicy retry;
    int timeout_seconds = 60;
    // Optional sink receiving one digest line per request/response pair.
    std::function<void(const std::string&)> digest_sink;
};

// Chat-completions-style JSON client over HTTP(S). Sends
// {model, messages: [{role: system}, {role: user}]} and returns
// choices[0].message.content.
class HttpChatClient : public LlmClient {
public:
    explicit HttpChatClient(HttpChatConfig config);

    std::string name() const override { return "http-chat:" + config_.model; }
    int max_concurrency() const override { return 4; }
    std::string complete(const std::string& system_prompt,
                         const std::string& user_prompt) const override;

private:
    HttpChatConfig config_;
};

// Renders the judging prompt for a (clean, generated, target) triple.
std::string judge_system_prompt();
std::string judge_user_prompt(const std::string& clean_text,
                              const std::string& generated_text,
                              const std::string& target_text);

// Reads the last line of the form "SCORE: <0|0.5|1>". Empty optional when no
// such line exists.
std::optional<double> parse_judge_score(const std::string& response);

// LLM-backed judge: prompts an LlmClient with the three-level rubric and
// parses the trailing SCORE line. A malformed reply is re-queried up to
// parse_retries times, then surfaces as JudgeParseError; scores never
// default silently.
class LlmJudge : public Judge {
public:
    LlmJudge(const LlmClient& client, int parse_retries = 3);

    std::string name() const override { return "llm-judge(" + client_.name() + ")"; }
    int max_concurrency() const override { return client_.max_concurrency(); }
    JudgeVerdict judge(const std::string& clean_text, const std::string& generated_text,
                       const std::string& target_text) const override;

private:
    const LlmClient& client_;
    int parse_retries_;
};

}  // namespace coa
