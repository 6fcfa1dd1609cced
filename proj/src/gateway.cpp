#include "memr3/gateway.hpp"

#include "memr3/errors.hpp"
#include "memr3/prompts.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <thread>

namespace memr3 {

using nlohmann::json;

namespace {

std::string replace_slot(std::string text, std::string_view slot, std::string_view value) {
    auto pos = text.find(slot);
    while (pos != std::string::npos) {
        text.replace(pos, slot.size(), value);
        pos = text.find(slot, pos + value.size());
    }
    return text;
}

std::string bullet_block(const std::vector<std::string>& items) {
    std::string block;
    for (const auto& item : items) {
        if (!block.empty()) block += "\n";
        block += "- " + item;
    }
    return block;
}

std::string snippet_block(const std::vector<Snippet>& snippets) {
    std::string block;
    for (const auto& snippet : snippets) {
        if (!block.empty()) block += "\n";
        block += "(" + snippet.source + ", " + std::to_string(snippet.position) + ") " +
                 snippet.text;
    }
    return block;
}

std::string env_or(const char* primary, const char* fallback) {
    if (const char* value = std::getenv(primary); value && *value) return value;
    if (const char* value = std::getenv(fallback); value && *value) return value;
    return "";
}

} // namespace

PromptPair render_generate_prompt(const AgentState& state, const std::string& directive) {
    PromptPair prompts;
    prompts.system = replace_slot(std::string(prompts::kGenerateSystemTemplate),
                                  "{decision_directive}", directive);
    std::string user(prompts::kGenerateUserTemplate);
    user = replace_slot(std::move(user), "{question}", state.question);
    user = replace_slot(std::move(user), "{evidence_block}", bullet_block(state.evidence));
    user = replace_slot(std::move(user), "{gap_block}", bullet_block(state.gaps));
    user = replace_slot(std::move(user), "{raw_block}", snippet_block(state.last_snippets));
    user = replace_slot(std::move(user), "{reasoning_block}",
                        state.last_reasoning.value_or(""));
    user = replace_slot(std::move(user), "{last_query}", state.last_refinement.value_or(""));
    prompts.user = std::move(user);
    return prompts;
}

PromptPair render_answer_prompt(const std::string& question, const std::string& draft,
                                const std::vector<std::string>& evidence,
                                const std::optional<std::string>& user_template_override) {
    PromptPair prompts;
    prompts.system = std::string(prompts::kAnswerSystemPrompt);
    std::string user = user_template_override.value_or(std::string(prompts::kAnswerUserTemplate));
    user = replace_slot(std::move(user), "{question}", question);
    user = replace_slot(std::move(user), "{draft}", draft);
    user = replace_slot(std::move(user), "{evidence_block}", bullet_block(evidence));
    prompts.user = std::move(user);
    return prompts;
}

BackendRequest make_request(const PromptPair& prompts, double temperature,
                            const std::string& model) {
    BackendRequest request;
    request.messages.push_back({"system", prompts.system});
    request.messages.push_back({"user", prompts.user});
    request.temperature = temperature;
    request.model = model;
    return request;
}

std::string complete(const BackendRequest& request, ChatBackend& backend) {
    return backend.complete(request);
}

GenerateOutput complete_structured(const BackendRequest& request, ChatBackend& backend,
                                   int max_retries,
                                   const std::vector<std::string>& carry_evidence,
                                   const std::vector<std::string>& carry_gaps) {
    BackendRequest attempt = request;
    for (int tries = 0; tries <= max_retries; ++tries) {
        std::string text = complete(attempt, backend);
        try {
            return parse_generate_output(text);
        } catch (const OutputParseError& error) {
            if (tries == max_retries) break;
            attempt.messages.push_back({"assistant", text});
            attempt.messages.push_back(
                {"user", std::string(prompts::kRetryInstructionPrefix) + error.what() +
                             std::string(prompts::kRetryInstructionSuffix)});
        }
    }
    // Fallback keeps the episode moving: a reflect with an empty reasoning
    // seed and the previous evidence/gaps carried forward.
    GenerateOutput fallback;
    fallback.evidence = carry_evidence;
    fallback.gaps = carry_gaps;
    fallback.decision = ActionKind::reflect;
    fallback.reasoning = "";
    return fallback;
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpBackendConfig HttpBackendConfig::from_environment() {
    HttpBackendConfig config;
    if (auto url = env_or("MEMR3_BASE_URL", "OPENAI_BASE_URL"); !url.empty())
        config.base_url = url;
    config.api_key = env_or("MEMR3_API_KEY", "OPENAI_API_KEY");
    return config;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
    bucket_tokens_ = config_.requests_per_minute > 0 ? 1.0 : 0.0;
    bucket_refill_ = std::chrono::steady_clock::now();
}

void HttpChatBackend::throttle() {
    if (config_.requests_per_minute <= 0) return;
    const double per_second = config_.requests_per_minute / 60.0;
    const double capacity = std::max(1.0, per_second * 5.0);  // five-second burst
    std::unique_lock lock(bucket_mutex_);
    for (;;) {
        auto now = std::chrono::steady_clock::now();
        double elapsed = std::chrono::duration<double>(now - bucket_refill_).count();
        bucket_refill_ = now;
        bucket_tokens_ = std::min(capacity, bucket_tokens_ + elapsed * per_second);
        if (bucket_tokens_ >= 1.0) {
            bucket_tokens_ -= 1.0;
            return;
        }
        double wait_seconds = (1.0 - bucket_tokens_) / per_second;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_seconds));
        lock.lock();
    }
}

std::string HttpChatBackend::complete(const BackendRequest& request) {
    throttle();

    json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["messages"] = json::array();
    for (const auto& message : request.messages)
        body["messages"].push_back({{"role", message.role}, {"content", message.content}});

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);

    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto result = client.Post(config_.completions_path, headers, body.dump(),
                              "application/json");
    if (!result)
        throw TransportError("chat completion request failed: " +
                             httplib::to_string(result.error()));
    if (result->status != 200)
        throw TransportError("chat completion returned HTTP " +
                             std::to_string(result->status) + ": " +
                             result->body.substr(0, 400));

    json doc = json::parse(result->body, nullptr, false);
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty())
        throw TransportError("chat completion response missing choices");
    const auto& first = doc["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string())
        throw TransportError("chat completion response missing message content");
    return first["message"]["content"].get<std::string>();
}

// ---------------------------------------------------------------------------
// Scripted / callback backends

std::string classify_request_stage(const BackendRequest& request) {
    if (request.messages.empty()) return "unknown";
    const std::string& system = request.messages.front().content;
    auto contains = [&](std::string_view needle) {
        return system.find(needle) != std::string::npos;
    };
    if (contains(prompts::kAnswerSystemPrompt.substr(0, 48))) return "final";
    if (contains(prompts::kJudgeSystemPrompt.substr(0, 32))) return "judge";
    if (contains(prompts::kForcedAnswerDirective)) return "answer";
    if (contains(prompts::kForcedRetrieveDirective)) return "retrieve";
    if (contains(prompts::kForcedReflectDirective)) return "reflect";
    if (contains(prompts::kDefaultDirective)) return "default";
    return "unknown";
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptStep> steps) : steps_(std::move(steps)) {}

std::string ScriptedBackend::complete(const BackendRequest& request) {
    std::lock_guard lock(mutex_);
    if (next_ >= steps_.size())
        throw ScriptExhausted("scripted backend exhausted after " +
                              std::to_string(steps_.size()) + " steps");
    const ScriptStep& step = steps_[next_];
    if (step.expect_stage) {
        std::string stage = classify_request_stage(request);
        if (stage != *step.expect_stage)
            throw ScriptMismatch("script step " + std::to_string(next_) + " expected stage \"" +
                                 *step.expect_stage + "\" but request classified as \"" +
                                 stage + "\"");
    }
    ++next_;
    calls_.fetch_add(1);
    return step.completion;
}

std::size_t ScriptedBackend::steps_remaining() const {
    std::lock_guard lock(mutex_);
    return steps_.size() - next_;
}

std::vector<ScriptStep> load_script(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open script file: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (!doc.is_array()) throw SchemaError("script file must be a JSON array: " + path.string());
    std::vector<ScriptStep> steps;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& entry = doc[i];
        if (!entry.is_object())
            throw SchemaError("script step " + std::to_string(i) + " must be an object");
        ScriptStep step;
        if (entry.contains("completion_json")) {
            step.completion = entry["completion_json"].dump();
        } else if (entry.contains("completion") && entry["completion"].is_string()) {
            step.completion = entry["completion"].get<std::string>();
        } else {
            throw SchemaError("script step " + std::to_string(i) +
                              " needs \"completion\" or \"completion_json\"");
        }
        if (entry.contains("expect")) step.expect_stage = entry["expect"].get<std::string>();
        steps.push_back(std::move(step));
    }
    return steps;
}

} // namespace memr3
