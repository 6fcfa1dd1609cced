#pragma once

// Evidence-gap bookkeeping: strict-JSON parsing of the generate node's
// output, and normalization of the (evidence, gaps) pair it carries.
//
// The model performs the semantic merge; this module records the result,
// deduplicates under trim+casefold, and keeps evidence and gaps disjoint.

#include "memr3/controller.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace memr3 {

// Parsed, validated generate output. Exactly one conditional payload is
// set, matching the decision. The "None" gap sentinel is already gone by
// the time a GenerateOutput exists.
struct GenerateOutput {
    std::vector<std::string> evidence;
    std::vector<std::string> gaps;
    ActionKind decision = ActionKind::reflect;
    std::optional<std::string> retrieval_query;
    std::optional<std::string> detailed_answer;
    std::optional<std::string> reasoning;

    bool operator==(const GenerateOutput&) const = default;
};

struct TrackerLimits {
    int max_evidence_bullets = 30;
    int max_bullet_chars = 500;
};

struct EvidenceGapSnapshot {
    std::vector<std::string> evidence;
    std::vector<std::string> gaps;
    int iteration = 0;
};

// Accepts a completion containing exactly one top-level JSON object,
// ignoring leading/trailing prose. Throws MalformedOutput when no such
// object (or more than one) exists, SchemaViolation on any schema break:
// missing/extra keys, bad types, unknown decision, conditional-key
// mismatch, empty retrieve/answer payload.
GenerateOutput parse_generate_output(const std::string& raw);

// Canonical JSON form; parse(serialize(x)) == x for every valid x.
std::string serialize_generate_output(const GenerateOutput& out);

// Records the output's evidence/gaps verbatim after normalization:
// trims, drops empties, dedups casefolded, drops any gap that duplicates
// an evidence bullet, and applies the compactness caps (oldest bullets
// dropped first, over-long bullets truncated).
EvidenceGapSnapshot merge_snapshot(const EvidenceGapSnapshot& prev,
                                   const GenerateOutput& out, int iteration,
                                   const TrackerLimits& limits = {});

// trim + ASCII casefold; the equality key used for dedup and disjointness.
std::string normalize_bullet(std::string_view text);

// The payload field matching the decision, as an Action.
Action action_from_output(const GenerateOutput& out);

// One machine-readable trace record per iteration:
// {k, action, evidence, gaps, snippet_ids, refinement}.
nlohmann::json snapshot_record(int k, ActionKind action,
                               const std::vector<std::string>& evidence,
                               const std::vector<std::string>& gaps,
                               const std::vector<SnippetId>& snippet_ids,
                               const std::string& refinement);

} // namespace memr3
