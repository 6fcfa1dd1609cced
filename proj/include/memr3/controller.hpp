#pragma once

// Agent state, the action algebra, and the deterministic router rails.
//
// The router applies three overrides in fixed priority order before any
// proposed action executes: iteration budget, then empty last retrieval,
// then reflect-streak cap. decision_directive() announces the same branch
// inside the system prompt so the model is steered before it answers;
// apply_router_constraints() enforces it afterwards.

#include "memr3/snippet.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace memr3 {

enum class ActionKind { retrieve, reflect, answer };

const char* to_string(ActionKind kind);
std::optional<ActionKind> action_kind_from_string(std::string_view name);

struct Action {
    ActionKind kind = ActionKind::reflect;
    // Refinement query for retrieve, reasoning for reflect, draft answer
    // for answer. Non-empty for retrieve and answer.
    std::string payload;
};

struct RouterLimits {
    int max_iterations = 5;        // n_max
    int reflect_cap = 2;           // n_cap; the value is config, not ground truth
    int chunks_per_iteration = 5;  // n_chk
};

// Mutable per-episode state. One episode owns one AgentState; the memory
// store stays read-only underneath.
struct AgentState {
    std::string question;
    std::vector<Snippet> last_snippets;     // result of the most recent action
    std::vector<std::string> evidence;
    std::vector<std::string> gaps;
    int iteration = 0;                      // completed generate->route rounds
    int reflect_streak = 0;                 // consecutive executed reflects
    std::set<SnippetId> used_snippet_ids;   // masked ids, grows monotonically
    std::optional<std::string> last_refinement;  // most recent retrieval query
    std::optional<std::string> last_reasoning;   // previous round's reflection, if any
    std::optional<std::string> draft_answer;     // stashed from an answer proposal
};

struct Directive {
    std::optional<ActionKind> forced;  // empty when the default three-way text applies
    std::string text;                  // goes into the system prompt's directive slot
};

Directive route_directive(const AgentState& state, const RouterLimits& limits);

// The directive string alone, for callers that only render prompts.
std::string decision_directive(const AgentState& state, const RouterLimits& limits);

// Total function: returns the proposed action unchanged when no rail fires,
// otherwise the forced kind with a locally synthesized fallback payload.
// The executor prefers re-asking the model under the forced directive and
// only keeps the synthesized payload as a last resort.
Action apply_router_constraints(const Action& proposed, const AgentState& state,
                                const RouterLimits& limits);

// Fallback payloads for forced kinds: draft answer (or concatenated
// evidence) for answer, the original question for retrieve, an empty
// reasoning seed for reflect.
std::string synthesize_payload(ActionKind forced, const AgentState& state);

struct GenerateOutput;
struct TrackerLimits;

// Per-round bookkeeping after an action executed: bumps the iteration,
// maintains the reflect streak, extends the mask with the new snippet ids,
// and replaces evidence/gaps with the (normalized) generate output.
// new_snippets is empty for reflect and answer rounds.
AgentState advance_state(AgentState state, const Action& executed,
                         std::vector<Snippet> new_snippets,
                         const GenerateOutput& output,
                         const TrackerLimits& tracker_limits);
AgentState advance_state(AgentState state, const Action& executed,
                         std::vector<Snippet> new_snippets,
                         const GenerateOutput& output);

} // namespace memr3
