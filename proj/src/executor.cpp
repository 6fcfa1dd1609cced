#include "memr3/executor.hpp"

#include "memr3/errors.hpp"
#include "memr3/prompts.hpp"

#include <algorithm>
#include <thread>

namespace memr3 {

using nlohmann::json;

const char* to_string(Termination termination) {
    switch (termination) {
        case Termination::answered: return "answered";
        case Termination::budget_forced: return "budget_forced";
    }
    return "answered";
}

long long EpisodeTrace::retrieved_tokens() const {
    long long total = 0;
    for (const auto& record : iterations) total += record.snippet_tokens;
    return total;
}

std::vector<SnippetId> EpisodeTrace::all_snippet_ids() const {
    std::vector<SnippetId> ids;
    for (const auto& record : iterations)
        ids.insert(ids.end(), record.snippet_ids.begin(), record.snippet_ids.end());
    return ids;
}

namespace {

constexpr std::size_t kPayloadDigestChars = 160;

std::string digest(const std::string& payload) {
    if (payload.size() <= kPayloadDigestChars) return payload;
    return payload.substr(0, kPayloadDigestChars) + "...";
}

std::string trim_text(const std::string& text) {
    std::size_t begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

// Retries transport-level failures with exponential backoff, then lets the
// last error escape for the caller to wrap into EpisodeFailed.
template <typename Fn>
auto with_transport_retries(const TransportRetryPolicy& policy, Fn&& fn) {
    const int attempts = std::max(1, policy.attempts);
    int delay_ms = policy.base_delay_ms;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= attempts) throw;
        } catch (const BackendUnavailable&) {
            if (attempt >= attempts) throw;
        }
        if (delay_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms *= 2;
    }
}

std::vector<SnippetId> ids_of(const std::vector<Snippet>& snippets) {
    std::vector<SnippetId> ids;
    ids.reserve(snippets.size());
    for (const auto& snippet : snippets) ids.push_back(snippet.id);
    return ids;
}

long long tokens_of(const std::vector<Snippet>& snippets) {
    long long total = 0;
    for (const auto& snippet : snippets) total += snippet.token_estimate;
    return total;
}

std::string compliance_note(ActionKind forced) {
    return std::string("Your previous reply chose a different action. The decision MUST be \"") +
           to_string(forced) + "\" as directed" + std::string(prompts::kRetryInstructionSuffix);
}

struct RoundOutcome {
    GenerateOutput output;
    Action executed;
    int backend_calls = 0;
};

// One generate->route round under a shared retry budget: strict-JSON
// repairs and directive compliance both spend from it, which keeps the
// episode-wide call bound exact.
RoundOutcome run_round(const AgentState& state, const Directive& directive,
                       const ExecutorOptions& options, ChatBackend& backend) {
    RoundOutcome outcome;
    BackendRequest request = make_request(render_generate_prompt(state, directive.text),
                                          options.temperature, options.model);
    bool parsed = false;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        std::string text = with_transport_retries(
            options.transport, [&] { return complete(request, backend); });
        ++outcome.backend_calls;
        try {
            outcome.output = parse_generate_output(text);
            parsed = true;
        } catch (const OutputParseError& error) {
            parsed = false;
            if (attempt < options.max_retries) {
                request.messages.push_back({"assistant", text});
                request.messages.push_back(
                    {"user", std::string(prompts::kRetryInstructionPrefix) + error.what() +
                                 std::string(prompts::kRetryInstructionSuffix)});
                continue;
            }
            break;
        }
        Action proposed = action_from_output(outcome.output);
        Action constrained = apply_router_constraints(proposed, state, options.limits);
        if (constrained.kind == proposed.kind) {
            outcome.executed = proposed;
            return outcome;
        }
        if (attempt < options.max_retries) {
            request.messages.push_back({"assistant", text});
            request.messages.push_back({"user", compliance_note(constrained.kind)});
            continue;
        }
        outcome.executed = constrained;  // synthesized fallback payload
        return outcome;
    }
    if (!parsed) {
        // Never produced valid JSON: fall back to a reflect with the state
        // carried forward, then let the rails have the final word.
        GenerateOutput fallback;
        fallback.evidence = state.evidence;
        fallback.gaps = state.gaps;
        fallback.decision = ActionKind::reflect;
        fallback.reasoning = "";
        outcome.output = fallback;
        outcome.executed =
            apply_router_constraints(action_from_output(fallback), state, options.limits);
    }
    return outcome;
}

} // namespace

EpisodeResult run_episode(const std::string& question, const RetrieverBackend& store,
                          const ExecutorOptions& options, ChatBackend& backend) {
    AgentState state;
    state.question = question;

    EpisodeTrace trace;
    trace.question = question;

    auto fail = [&](const std::exception& error) -> EpisodeFailed {
        trace.failure = error.what();
        return EpisodeFailed(error.what(), trace);
    };

    // start is always followed by retrieve: the initial masked retrieval
    // uses the bare question, before any generate call.
    try {
        state.last_snippets = with_transport_retries(options.transport, [&] {
            return retrieve_masked(question, store, state.used_snippet_ids,
                                   options.limits.chunks_per_iteration);
        });
    } catch (const TransportError& error) {
        throw fail(error);
    } catch (const BackendUnavailable& error) {
        throw fail(error);
    }
    for (const auto& snippet : state.last_snippets)
        state.used_snippet_ids.insert(snippet.id);

    for (;;) {
        Directive directive = route_directive(state, options.limits);

        IterationRecord record;
        record.k = state.iteration;
        record.directive = directive.forced ? to_string(*directive.forced) : "default";
        record.snippet_ids = ids_of(state.last_snippets);
        record.snippet_tokens = tokens_of(state.last_snippets);

        RoundOutcome outcome;
        try {
            outcome = run_round(state, directive, options, backend);
        } catch (const TransportError& error) {
            throw fail(error);
        } catch (const BackendUnavailable& error) {
            throw fail(error);
        }
        record.backend_calls = outcome.backend_calls;
        record.executed = outcome.executed.kind;
        record.payload = digest(outcome.executed.payload);

        if (outcome.executed.kind == ActionKind::answer) {
            state = advance_state(state, outcome.executed, {}, outcome.output,
                                  options.tracker);
            record.evidence = state.evidence;
            record.gaps = state.gaps;

            auto prompts = render_answer_prompt(question, outcome.executed.payload,
                                                state.evidence, options.answer_template);
            std::string final_text;
            try {
                final_text = with_transport_retries(options.transport, [&] {
                    return complete(make_request(prompts, options.temperature, options.model),
                                    backend);
                });
            } catch (const TransportError& error) {
                trace.iterations.push_back(record);
                throw fail(error);
            } catch (const BackendUnavailable& error) {
                trace.iterations.push_back(record);
                throw fail(error);
            }
            record.backend_calls += 1;
            trace.iterations.push_back(record);
            trace.final_answer = trim_text(final_text);
            trace.termination = record.k >= options.limits.max_iterations
                                    ? Termination::budget_forced
                                    : Termination::answered;
            return {trace.final_answer, trace};
        }

        std::vector<Snippet> new_snippets;
        if (outcome.executed.kind == ActionKind::retrieve) {
            record.refinement = outcome.executed.payload;
            std::string composed = compose_query(
                question, std::optional<std::string>(outcome.executed.payload));
            try {
                new_snippets = with_transport_retries(options.transport, [&] {
                    return retrieve_masked(composed, store, state.used_snippet_ids,
                                           options.limits.chunks_per_iteration);
                });
            } catch (const TransportError& error) {
                trace.iterations.push_back(record);
                throw fail(error);
            } catch (const BackendUnavailable& error) {
                trace.iterations.push_back(record);
                throw fail(error);
            }
        }

        state = advance_state(state, outcome.executed, std::move(new_snippets),
                              outcome.output, options.tracker);
        record.evidence = state.evidence;
        record.gaps = state.gaps;
        trace.iterations.push_back(record);
    }
}

EpisodeResult run_episode(const std::string& question, const RetrieverBackend& store,
                          const RouterLimits& limits, ChatBackend& backend) {
    ExecutorOptions options;
    options.limits = limits;
    return run_episode(question, store, options, backend);
}

json trace_to_json(const EpisodeTrace& trace) {
    json doc;
    doc["question"] = trace.question;
    doc["final_answer"] = trace.final_answer;
    doc["termination"] = to_string(trace.termination);
    doc["failure"] = trace.failure;
    doc["iterations"] = json::array();
    for (const auto& record : trace.iterations) {
        json entry = snapshot_record(record.k, record.executed, record.evidence,
                                     record.gaps, record.snippet_ids, record.refinement);
        entry["directive"] = record.directive;
        entry["payload"] = record.payload;
        entry["backend_calls"] = record.backend_calls;
        entry["snippet_tokens"] = record.snippet_tokens;
        doc["iterations"].push_back(std::move(entry));
    }
    return doc;
}

EpisodeTrace trace_from_json(const json& doc) {
    if (!doc.is_object()) throw SchemaError("trace: top level must be a JSON object");
    EpisodeTrace trace;
    try {
        trace.question = doc.value("question", "");
        trace.final_answer = doc.value("final_answer", "");
        trace.failure = doc.value("failure", "");
        trace.termination = doc.value("termination", "answered") == "budget_forced"
                                ? Termination::budget_forced
                                : Termination::answered;
        for (const auto& entry : doc.value("iterations", json::array())) {
            IterationRecord record;
            record.k = entry.at("k").get<int>();
            auto kind = action_kind_from_string(entry.at("action").get<std::string>());
            if (!kind) throw SchemaError("trace: unknown action kind");
            record.executed = *kind;
            record.evidence = entry.value("evidence", std::vector<std::string>{});
            record.gaps = entry.value("gaps", std::vector<std::string>{});
            record.snippet_ids = entry.value("snippet_ids", std::vector<std::string>{});
            record.refinement = entry.value("refinement", "");
            record.directive = entry.value("directive", "default");
            record.payload = entry.value("payload", "");
            record.backend_calls = entry.value("backend_calls", 0);
            record.snippet_tokens = entry.value("snippet_tokens", 0LL);
            trace.iterations.push_back(std::move(record));
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("trace: ") + e.what());
    }
    return trace;
}

std::string emit_trace_json(const EpisodeTrace& trace) {
    return trace_to_json(trace).dump(2);
}

std::string emit_trace(const EpisodeTrace& trace) {
    std::string out;
    out += "Question: " + trace.question + "\n";
    for (const auto& record : trace.iterations) {
        out += "\nAct " + std::to_string(record.k) + " [" +
               to_string(record.executed) + "]";
        if (record.directive != "default") out += " (forced: " + record.directive + ")";
        out += "\n";
        out += "  evidence:\n";
        if (record.evidence.empty()) out += "    (none)\n";
        for (const auto& bullet : record.evidence) out += "    - " + bullet + "\n";
        out += "  gaps:\n";
        if (record.gaps.empty()) out += "    (none)\n";
        for (const auto& gap : record.gaps) out += "    - " + gap + "\n";
        if (!record.refinement.empty()) out += "  query: " + record.refinement + "\n";
        if (!record.snippet_ids.empty()) {
            out += "  snippets:";
            for (const auto& id : record.snippet_ids) out += " " + id;
            out += " (" + std::to_string(record.snippet_tokens) + " tokens)\n";
        }
    }
    if (!trace.failure.empty()) {
        out += "\nFAILED: " + trace.failure + "\n";
        return out;
    }
    out += "\nFinal answer: " + trace.final_answer + "\n";
    out += "Termination: " + std::string(to_string(trace.termination)) + "\n";
    return out;
}

} // namespace memr3
