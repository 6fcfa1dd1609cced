#pragma once

// Prompt rendering, chat-completion backends (live HTTP, scripted replay,
// and a callback shim for tests), and the strict-JSON retry loop.

#include "memr3/controller.hpp"
#include "memr3/tracker.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace memr3 {

struct PromptPair {
    std::string system;
    std::string user;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct BackendRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::string model;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string name() const = 0;
    // Returns the completion text. Throws TransportError on transport
    // failure, ScriptExhausted/ScriptMismatch on scripted misconfiguration.
    virtual std::string complete(const BackendRequest& request) = 0;
};

// System prompt = the generate template with the directive substituted;
// user prompt = the six-block template filled from the state. Empty inputs
// render as empty blocks.
PromptPair render_generate_prompt(const AgentState& state, const std::string& directive);

// Final-answer prompt from the original question, the router's draft
// answer, and the evidence bullets. user_template_override substitutes the
// shipped template (same {question}/{draft}/{evidence_block} slots).
PromptPair render_answer_prompt(const std::string& question, const std::string& draft,
                                const std::vector<std::string>& evidence,
                                const std::optional<std::string>& user_template_override = std::nullopt);

BackendRequest make_request(const PromptPair& prompts, double temperature,
                            const std::string& model);

// Thin call-through; kept as the single seam every backend call goes
// through.
std::string complete(const BackendRequest& request, ChatBackend& backend);

// complete + parse. On MalformedOutput/SchemaViolation, retries up to
// max_retries with a corrective user message quoting the violation. After
// exhaustion returns a fallback reflect output (empty reasoning seed,
// carry_evidence/carry_gaps carried forward), so the episode always makes
// progress.
GenerateOutput complete_structured(const BackendRequest& request, ChatBackend& backend,
                                   int max_retries,
                                   const std::vector<std::string>& carry_evidence = {},
                                   const std::vector<std::string>& carry_gaps = {});

// ---------------------------------------------------------------------------
// Backends

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string api_key;
    std::string completions_path = "/v1/chat/completions";
    int timeout_seconds = 120;
    // Token bucket over requests; 0 disables throttling.
    double requests_per_minute = 0.0;

    // MEMR3_API_KEY / OPENAI_API_KEY and MEMR3_BASE_URL / OPENAI_BASE_URL.
    static HttpBackendConfig from_environment();
};

// OpenAI-compatible chat-completions client. Safe to call from concurrent
// episodes: each call uses its own connection, and the rate limiter is
// internally locked.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig config);

    std::string name() const override { return "http"; }
    std::string complete(const BackendRequest& request) override;

private:
    void throttle();

    HttpBackendConfig config_;
    std::mutex bucket_mutex_;
    double bucket_tokens_ = 0.0;
    std::chrono::steady_clock::time_point bucket_refill_;
};

// Which stage of the pipeline a request belongs to, recovered from the
// rendered system prompt: "default", a forced kind, "final" (answer
// prompt), "judge", or "unknown".
std::string classify_request_stage(const BackendRequest& request);

struct ScriptStep {
    std::string completion;
    // When set, the step only matches a request whose classified stage
    // equals this; a mismatch throws ScriptMismatch instead of silently
    // replaying the wrong line.
    std::optional<std::string> expect_stage;
};

// Deterministic canned-completion replay, consumed strictly in order.
// Running past the script throws ScriptExhausted, never returns silence.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptStep> steps);

    std::string name() const override { return "scripted"; }
    std::string complete(const BackendRequest& request) override;

    int calls_made() const { return calls_.load(); }
    std::size_t steps_remaining() const;

private:
    mutable std::mutex mutex_;
    std::vector<ScriptStep> steps_;
    std::size_t next_ = 0;
    std::atomic<int> calls_{0};
};

// Computes completions from the request; the workhorse for programmable
// test fixtures. The function must be thread-safe if episodes run
// concurrently.
class CallbackBackend : public ChatBackend {
public:
    using Fn = std::function<std::string(const BackendRequest&)>;
    explicit CallbackBackend(Fn fn) : fn_(std::move(fn)) {}

    std::string name() const override { return "callback"; }
    std::string complete(const BackendRequest& request) override {
        calls_.fetch_add(1);
        return fn_(request);
    }
    int calls_made() const { return calls_.load(); }

private:
    Fn fn_;
    std::atomic<int> calls_{0};
};

// Script files: JSON array of steps; each step is either
// {"completion": "<text>"} or {"completion_json": {...}} plus an optional
// "expect" stage.
std::vector<ScriptStep> load_script(const std::filesystem::path& path);

} // namespace memr3
