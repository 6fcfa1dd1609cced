#include "memr3/tracker.hpp"

#include "memr3/errors.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace memr3 {

using nlohmann::json;

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    return std::string(text.substr(begin, end - begin));
}

// Balanced {...} span starting at `start`, honoring string literals and
// escapes. Returns one past the closing brace, or npos when unbalanced.
std::size_t balanced_object_end(const std::string& text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
            if (depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

// All top-level parseable JSON objects in the completion. Prose braces are
// skipped: spans that do not parse as a JSON object are re-scanned from the
// next character.
std::vector<json> extract_objects(const std::string& text) {
    std::vector<json> found;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        std::size_t end = balanced_object_end(text, i);
        if (end == std::string::npos) {
            ++i;
            continue;
        }
        json parsed = json::parse(text.substr(i, end - i), nullptr, false);
        if (parsed.is_object()) {
            found.push_back(std::move(parsed));
            i = end;
        } else {
            ++i;
        }
    }
    return found;
}

bool is_none_sentinel(const std::string& value) {
    std::string key = normalize_bullet(value);
    return key.empty() || key == "none";
}

std::vector<std::string> normalize_gaps(const json& gaps) {
    std::vector<std::string> out;
    if (gaps.is_string()) {
        auto value = gaps.get<std::string>();
        if (!is_none_sentinel(value)) out.push_back(std::move(value));
        return out;
    }
    if (gaps.is_array()) {
        for (const auto& entry : gaps) {
            if (!entry.is_string())
                throw SchemaViolation("\"gaps\" entries must be strings");
            auto value = entry.get<std::string>();
            if (!is_none_sentinel(value)) out.push_back(std::move(value));
        }
        return out;
    }
    throw SchemaViolation("\"gaps\" must be a string or an array of strings");
}

const char* conditional_key(ActionKind kind) {
    switch (kind) {
        case ActionKind::retrieve: return "retrieval_query";
        case ActionKind::answer: return "detailed_answer";
        case ActionKind::reflect: return "reasoning";
    }
    return "reasoning";
}

} // namespace

std::string normalize_bullet(std::string_view text) {
    std::string out = trim(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

GenerateOutput parse_generate_output(const std::string& raw) {
    auto objects = extract_objects(raw);
    if (objects.empty()) throw MalformedOutput("no JSON object found in completion");
    if (objects.size() > 1)
        throw MalformedOutput("multiple JSON objects found in completion");
    const json& doc = objects.front();

    for (const char* key : {"evidence", "gaps", "decision"}) {
        if (!doc.contains(key))
            throw SchemaViolation(std::string("missing required key \"") + key + "\"");
    }

    if (!doc["evidence"].is_array())
        throw SchemaViolation("\"evidence\" must be a JSON array");
    GenerateOutput out;
    for (const auto& entry : doc["evidence"]) {
        if (!entry.is_string())
            throw SchemaViolation("\"evidence\" entries must be strings");
        out.evidence.push_back(entry.get<std::string>());
    }

    out.gaps = normalize_gaps(doc["gaps"]);

    if (!doc["decision"].is_string())
        throw SchemaViolation("\"decision\" must be a string");
    auto decision = action_kind_from_string(doc["decision"].get<std::string>());
    if (!decision)
        throw SchemaViolation("\"decision\" must be one of \"retrieve\", \"answer\", \"reflect\"");
    out.decision = *decision;

    const std::string expected = conditional_key(out.decision);
    for (const auto& [key, value] : doc.items()) {
        if (key == "evidence" || key == "gaps" || key == "decision") continue;
        if (key != expected)
            throw SchemaViolation("unexpected key \"" + key + "\" for decision \"" +
                                  to_string(out.decision) + "\"");
        if (!value.is_string())
            throw SchemaViolation("\"" + key + "\" must be a string");
    }
    if (!doc.contains(expected))
        throw SchemaViolation("missing conditional key \"" + expected +
                              "\" for decision \"" + to_string(out.decision) + "\"");

    auto payload = doc[expected].get<std::string>();
    if (out.decision != ActionKind::reflect && trim(payload).empty())
        throw SchemaViolation("\"" + expected + "\" must be non-empty");

    switch (out.decision) {
        case ActionKind::retrieve: out.retrieval_query = std::move(payload); break;
        case ActionKind::answer: out.detailed_answer = std::move(payload); break;
        case ActionKind::reflect: out.reasoning = std::move(payload); break;
    }
    return out;
}

std::string serialize_generate_output(const GenerateOutput& out) {
    json doc;
    doc["evidence"] = out.evidence;
    doc["gaps"] = out.gaps;
    doc["decision"] = to_string(out.decision);
    switch (out.decision) {
        case ActionKind::retrieve: doc["retrieval_query"] = out.retrieval_query.value_or(""); break;
        case ActionKind::answer: doc["detailed_answer"] = out.detailed_answer.value_or(""); break;
        case ActionKind::reflect: doc["reasoning"] = out.reasoning.value_or(""); break;
    }
    return doc.dump();
}

EvidenceGapSnapshot merge_snapshot(const EvidenceGapSnapshot& prev,
                                   const GenerateOutput& out, int iteration,
                                   const TrackerLimits& limits) {
    (void)prev;  // rewrite semantics: the model already merged into `out`
    EvidenceGapSnapshot snapshot;
    snapshot.iteration = iteration;

    std::unordered_set<std::string> evidence_keys;
    for (const auto& bullet : out.evidence) {
        std::string text = trim(bullet);
        if (text.empty()) continue;
        if (static_cast<int>(text.size()) > limits.max_bullet_chars)
            text.resize(static_cast<std::size_t>(limits.max_bullet_chars));
        if (evidence_keys.insert(normalize_bullet(text)).second)
            snapshot.evidence.push_back(std::move(text));
    }
    if (static_cast<int>(snapshot.evidence.size()) > limits.max_evidence_bullets) {
        // Drop oldest first: the head of the list.
        snapshot.evidence.erase(
            snapshot.evidence.begin(),
            snapshot.evidence.end() - limits.max_evidence_bullets);
    }
    // Rebuild keys after the cap so disjointness checks the kept bullets.
    evidence_keys.clear();
    for (const auto& bullet : snapshot.evidence) evidence_keys.insert(normalize_bullet(bullet));

    std::unordered_set<std::string> gap_keys;
    for (const auto& gap : out.gaps) {
        std::string text = trim(gap);
        if (text.empty()) continue;
        std::string key = normalize_bullet(text);
        if (evidence_keys.count(key)) continue;  // evidence wins ties
        if (gap_keys.insert(std::move(key)).second) snapshot.gaps.push_back(std::move(text));
    }
    return snapshot;
}

Action action_from_output(const GenerateOutput& out) {
    switch (out.decision) {
        case ActionKind::retrieve: return {ActionKind::retrieve, out.retrieval_query.value_or("")};
        case ActionKind::answer: return {ActionKind::answer, out.detailed_answer.value_or("")};
        case ActionKind::reflect: return {ActionKind::reflect, out.reasoning.value_or("")};
    }
    return {ActionKind::reflect, ""};
}

nlohmann::json snapshot_record(int k, ActionKind action,
                               const std::vector<std::string>& evidence,
                               const std::vector<std::string>& gaps,
                               const std::vector<SnippetId>& snippet_ids,
                               const std::string& refinement) {
    json record;
    record["k"] = k;
    record["action"] = to_string(action);
    record["evidence"] = evidence;
    record["gaps"] = gaps;
    record["snippet_ids"] = snippet_ids;
    record["refinement"] = refinement;
    return record;
}

} // namespace memr3
