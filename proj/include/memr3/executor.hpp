#pragma once

// Fixed-topology episode driver:
// start -> retrieve -> { generate -> router -> retrieve | reflect | answer }* -> end.
// Records a full trace for explainability and replay.

#include "memr3/controller.hpp"
#include "memr3/gateway.hpp"
#include "memr3/retrieval.hpp"
#include "memr3/tracker.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace memr3 {

struct IterationRecord {
    int k = 0;
    std::string directive;   // "default" or the forced kind
    ActionKind executed = ActionKind::reflect;
    std::string payload;     // executed action's payload (truncated digest)
    std::string refinement;  // retrieval query, set on retrieve rounds
    std::vector<SnippetId> snippet_ids;
    std::vector<std::string> evidence;
    std::vector<std::string> gaps;
    int backend_calls = 0;
    long long snippet_tokens = 0;  // token estimate of snippets fed this round
};

enum class Termination { answered, budget_forced };
const char* to_string(Termination termination);

struct EpisodeTrace {
    std::string question;
    std::vector<IterationRecord> iterations;  // at most n_max + 1 entries
    std::string final_answer;
    Termination termination = Termination::answered;
    std::string failure;  // nonempty on partial traces

    long long retrieved_tokens() const;
    std::vector<SnippetId> all_snippet_ids() const;
};

struct TransportRetryPolicy {
    int attempts = 3;
    int base_delay_ms = 200;  // doubles per attempt
};

struct ExecutorOptions {
    RouterLimits limits;
    TrackerLimits tracker;
    // Per-round retry budget shared between strict-JSON repairs and
    // directive compliance, so the episode-wide call bound
    // (n_max + 1) * (1 + max_retries) + 1 stays exact.
    int max_retries = 2;
    double temperature = 0.0;
    std::string model = "gpt-4o-mini";
    TransportRetryPolicy transport;
    std::optional<std::string> answer_template;
};

class EpisodeFailed : public std::runtime_error {
public:
    EpisodeFailed(const std::string& what, EpisodeTrace partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const EpisodeTrace& partial_trace() const { return partial_; }

private:
    EpisodeTrace partial_;
};

struct EpisodeResult {
    std::string answer;
    EpisodeTrace trace;
};

// Runs one full episode. Transport failures are retried per the policy and
// then surface as EpisodeFailed with the partial trace attached. Always
// terminates within limits.max_iterations + 1 generate rounds, whatever
// the backend does.
EpisodeResult run_episode(const std::string& question, const RetrieverBackend& store,
                          const ExecutorOptions& options, ChatBackend& backend);
EpisodeResult run_episode(const std::string& question, const RetrieverBackend& store,
                          const RouterLimits& limits, ChatBackend& backend);

nlohmann::json trace_to_json(const EpisodeTrace& trace);
EpisodeTrace trace_from_json(const nlohmann::json& doc);

// Human-readable "Act k" blocks mirroring the evidence-gap progression.
std::string emit_trace(const EpisodeTrace& trace);
// Canonical machine form (trace_to_json, stable field order, 2-space indent).
std::string emit_trace_json(const EpisodeTrace& trace);

} // namespace memr3
