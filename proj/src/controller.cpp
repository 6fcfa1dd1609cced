#include "memr3/controller.hpp"

#include "memr3/prompts.hpp"
#include "memr3/tracker.hpp"

#include <utility>

namespace memr3 {

const char* to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::retrieve: return "retrieve";
        case ActionKind::reflect: return "reflect";
        case ActionKind::answer: return "answer";
    }
    return "reflect";
}

std::optional<ActionKind> action_kind_from_string(std::string_view name) {
    if (name == "retrieve") return ActionKind::retrieve;
    if (name == "reflect") return ActionKind::reflect;
    if (name == "answer") return ActionKind::answer;
    return std::nullopt;
}

namespace {

// The single source of the override order: budget, then empty retrieval,
// then streak. Everything the router does derives from this.
std::optional<ActionKind> forced_kind(const AgentState& state, const RouterLimits& limits) {
    if (state.iteration >= limits.max_iterations) return ActionKind::answer;
    if (state.last_snippets.empty()) return ActionKind::reflect;
    if (state.reflect_streak >= limits.reflect_cap) return ActionKind::retrieve;
    return std::nullopt;
}

std::string directive_text(std::optional<ActionKind> forced) {
    if (!forced) return std::string(prompts::kDefaultDirective);
    switch (*forced) {
        case ActionKind::answer: return std::string(prompts::kForcedAnswerDirective);
        case ActionKind::retrieve: return std::string(prompts::kForcedRetrieveDirective);
        case ActionKind::reflect: return std::string(prompts::kForcedReflectDirective);
    }
    return std::string(prompts::kDefaultDirective);
}

} // namespace

Directive route_directive(const AgentState& state, const RouterLimits& limits) {
    auto forced = forced_kind(state, limits);
    return Directive{forced, directive_text(forced)};
}

std::string decision_directive(const AgentState& state, const RouterLimits& limits) {
    return route_directive(state, limits).text;
}

std::string synthesize_payload(ActionKind forced, const AgentState& state) {
    switch (forced) {
        case ActionKind::answer: {
            if (state.draft_answer && !state.draft_answer->empty()) return *state.draft_answer;
            std::string joined;
            for (const auto& bullet : state.evidence) {
                if (!joined.empty()) joined += "; ";
                joined += bullet;
            }
            return joined.empty() ? state.question : joined;
        }
        case ActionKind::retrieve:
            return state.question;
        case ActionKind::reflect:
            return std::string();
    }
    return std::string();
}

Action apply_router_constraints(const Action& proposed, const AgentState& state,
                                const RouterLimits& limits) {
    auto forced = forced_kind(state, limits);
    if (!forced || *forced == proposed.kind) return proposed;
    return Action{*forced, synthesize_payload(*forced, state)};
}

AgentState advance_state(AgentState state, const Action& executed,
                         std::vector<Snippet> new_snippets,
                         const GenerateOutput& output,
                         const TrackerLimits& tracker_limits) {
    state.iteration += 1;
    state.reflect_streak =
        executed.kind == ActionKind::reflect ? state.reflect_streak + 1 : 0;

    for (const auto& snippet : new_snippets) state.used_snippet_ids.insert(snippet.id);

    EvidenceGapSnapshot prev{state.evidence, state.gaps, state.iteration - 1};
    auto snapshot = merge_snapshot(prev, output, state.iteration, tracker_limits);
    state.evidence = std::move(snapshot.evidence);
    state.gaps = std::move(snapshot.gaps);

    state.last_snippets = std::move(new_snippets);

    switch (executed.kind) {
        case ActionKind::retrieve:
            state.last_refinement = executed.payload;
            // Reasoning feeds exactly the next generate call; a retrieve in
            // between means there is no F_{k-1} to show.
            state.last_reasoning.reset();
            break;
        case ActionKind::reflect:
            state.last_reasoning = executed.payload;
            break;
        case ActionKind::answer:
            state.draft_answer = executed.payload;
            state.last_reasoning.reset();
            break;
    }
    // Keep a draft around even when an answer proposal got overridden, so a
    // later budget-forced answer has something better than bare evidence.
    if (output.decision == ActionKind::answer && output.detailed_answer &&
        !output.detailed_answer->empty()) {
        state.draft_answer = *output.detailed_answer;
    }
    return state;
}

AgentState advance_state(AgentState state, const Action& executed,
                         std::vector<Snippet> new_snippets,
                         const GenerateOutput& output) {
    return advance_state(std::move(state), executed, std::move(new_snippets), output,
                         TrackerLimits{});
}

} // namespace memr3
