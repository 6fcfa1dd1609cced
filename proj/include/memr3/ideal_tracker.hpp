#pragma once

// The idealized evidence-gap tracker: requirement spaces, the
// memory-support relation, the set-valued update rule, and an audit that
// checks monotonicity / soundness / completeness over any candidate trace
// and classifies deviations (coverage, hallucination, granularity bias).
//
// Predicates are data, not code, so scenarios are serializable and every
// check is deterministic: exact-token match, metadata key-value match, and
// date-at-granularity match over ISO-8601 partial dates (YYYY, YYYY-MM,
// YYYY-MM-DD; granularity comparison is prefix containment).

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace memr3::ideal {

enum class DateGranularity { year, year_month, year_month_day };

const char* to_string(DateGranularity granularity);
std::optional<DateGranularity> granularity_from_string(std::string_view name);

// An atomic information requirement with a deterministic, total predicate
// over memory items.
struct Requirement {
    enum class Kind { token, metadata, date };

    std::string id;
    Kind kind = Kind::token;

    // token: `phrase` must appear as a contiguous token sequence in the
    // item text. An empty phrase never matches (the always-false predicate).
    std::string phrase;

    // metadata: metadata[key] == value after trim+casefold.
    std::string key;

    // date: expected partial date; optional. When set, a date mention must
    // be component-prefix-compatible with it.
    std::string value;

    // date: token sequences that tie the date to its event; all must appear
    // in the item text.
    std::vector<std::string> anchors;

    // date: required precision. A year-only mention does not satisfy a
    // year-month-day requirement.
    DateGranularity granularity = DateGranularity::year;
};

struct RequirementSpace {
    std::string query_id;
    std::vector<Requirement> requirements;  // non-empty, ids unique
};

struct MemoryItem {
    std::string id;
    std::string text;
    std::map<std::string, std::string> metadata;
};

using Batch = std::vector<MemoryItem>;

// Partition of the requirement ids: established ∪ remaining = R(q),
// established ∩ remaining = ∅.
struct IdealState {
    std::set<std::string> established;
    std::set<std::string> remaining;

    bool operator==(const IdealState&) const = default;
};

// The support relation m ⊨ r.
bool supports(const MemoryItem& item, const Requirement& requirement);

// Partial dates found in the item's text and metadata values, validated
// (YYYY[-MM[-DD]], year 1000-2999, month 01-12, day 01-31).
std::vector<std::string> extract_partial_dates(const MemoryItem& item);

IdealState initial_state(const RequirementSpace& space);

// established' = established ∪ {r : ∃ m ∈ batch, m ⊨ r};
// remaining' = R(q) \ established'.
IdealState ideal_update(const IdealState& state, const Batch& batch,
                        const RequirementSpace& space);

// Applies ideal_update sequentially from the empty established set and
// returns the full sequence, initial state included (length = batches + 1).
std::vector<IdealState> run_ideal_episode(const RequirementSpace& space,
                                          const std::vector<Batch>& schedule);

// Id-based schedule resolved against a store; unknown ids are an error.
std::vector<IdealState> run_ideal_episode(
    const RequirementSpace& space, const std::vector<MemoryItem>& store,
    const std::vector<std::vector<std::string>>& schedule_ids);

struct Violation {
    std::string kind;  // "monotonicity" | "soundness" | "completeness" | "partition"
    int step = 0;
    std::string requirement_id;  // empty for step-level breaks
    std::string detail;
};

// Non-fatal classification of how a candidate trace deviates from the
// ideal, or why an ideal gap can never close.
struct Diagnosis {
    std::string bias;  // "coverage" | "hallucination" | "granularity" | "uncovered"
    std::string requirement_id;
    int step = -1;  // -1 for whole-trace diagnoses
    std::string detail;
};

struct AuditReport {
    std::vector<Violation> violations;
    std::vector<Diagnosis> diagnoses;
    bool ok() const { return violations.empty(); }
};

// Audits any candidate trace (the ideal tracker's own output passes with
// zero violations). trace.size() must equal schedule.size() + 1. Expected
// sets are recomputed with a cumulative brute-force support scan, not with
// ideal_update.
AuditReport verify_trace_properties(const std::vector<IdealState>& trace,
                                    const RequirementSpace& space,
                                    const std::vector<Batch>& schedule);

// Scenario files: {"query_id", "requirements", "memory_items", "schedule"}.
struct Scenario {
    RequirementSpace space;
    std::vector<MemoryItem> store;
    std::vector<std::vector<std::string>> schedule;
};

Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

nlohmann::json state_to_json(const IdealState& state);
nlohmann::json report_to_json(const AuditReport& report,
                              const std::vector<IdealState>& trace);

} // namespace memr3::ideal
