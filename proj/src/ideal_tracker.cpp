#include "memr3/ideal_tracker.hpp"

#include "memr3/errors.hpp"
#include "memr3/retrieval.hpp"  // tokenize

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace memr3::ideal {

using nlohmann::json;

const char* to_string(DateGranularity granularity) {
    switch (granularity) {
        case DateGranularity::year: return "year";
        case DateGranularity::year_month: return "year-month";
        case DateGranularity::year_month_day: return "year-month-day";
    }
    return "year";
}

std::optional<DateGranularity> granularity_from_string(std::string_view name) {
    if (name == "year") return DateGranularity::year;
    if (name == "year-month") return DateGranularity::year_month;
    if (name == "year-month-day") return DateGranularity::year_month_day;
    return std::nullopt;
}

namespace {

int components(DateGranularity granularity) {
    switch (granularity) {
        case DateGranularity::year: return 1;
        case DateGranularity::year_month: return 2;
        case DateGranularity::year_month_day: return 3;
    }
    return 1;
}

std::string fold(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<char>(std::tolower(c)));
    std::size_t begin = out.find_first_not_of(" \t\r\n");
    std::size_t end = out.find_last_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    return out.substr(begin, end - begin + 1);
}

// Number of '-'-separated components in a partial date string.
int date_components(std::string_view date) {
    return 1 + static_cast<int>(std::count(date.begin(), date.end(), '-'));
}

bool digits(std::string_view text, std::size_t pos, int count) {
    if (pos + static_cast<std::size_t>(count) > text.size()) return false;
    for (int i = 0; i < count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[pos + i]))) return false;
    }
    return true;
}

int to_int(std::string_view text, std::size_t pos, int count) {
    int value = 0;
    for (int i = 0; i < count; ++i) value = value * 10 + (text[pos + i] - '0');
    return value;
}

// Scans for YYYY[-MM[-DD]] with digit boundaries on both sides. An invalid
// finer component degrades the mention to the coarser prefix rather than
// discarding it.
void scan_dates(std::string_view text, std::vector<std::string>& out) {
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i + 4 <= n) {
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
        if (!left_ok || !digits(text, i, 4) ||
            (i + 4 < n && std::isdigit(static_cast<unsigned char>(text[i + 4])))) {
            ++i;
            continue;
        }
        int year = to_int(text, i, 4);
        if (year < 1000 || year > 2999) {
            i += 4;
            continue;
        }
        std::size_t end = i + 4;
        std::string mention(text.substr(i, 4));
        if (end < n && text[end] == '-' && digits(text, end + 1, 2) &&
            !(end + 3 < n && std::isdigit(static_cast<unsigned char>(text[end + 3])))) {
            int month = to_int(text, end + 1, 2);
            if (month >= 1 && month <= 12) {
                mention += text.substr(end, 3);
                end += 3;
                if (end < n && text[end] == '-' && digits(text, end + 1, 2) &&
                    !(end + 3 < n && std::isdigit(static_cast<unsigned char>(text[end + 3])))) {
                    int day = to_int(text, end + 1, 2);
                    if (day >= 1 && day <= 31) {
                        mention += text.substr(end, 3);
                        end += 3;
                    }
                }
            }
        }
        out.push_back(std::move(mention));
        i = end;
    }
}

bool contains_token_phrase(const std::vector<std::string>& item_tokens,
                           const std::string& phrase) {
    auto phrase_tokens = tokenize(phrase);
    if (phrase_tokens.empty()) return false;
    if (phrase_tokens.size() > item_tokens.size()) return false;
    return std::search(item_tokens.begin(), item_tokens.end(), phrase_tokens.begin(),
                       phrase_tokens.end()) != item_tokens.end();
}

// First `count` components of both dates agree (componentwise string
// prefix).
bool prefix_compatible(std::string_view mention, std::string_view expected, int count) {
    std::size_t consumed_m = 0;
    std::size_t consumed_e = 0;
    for (int c = 0; c < count; ++c) {
        std::size_t next_m = mention.find('-', consumed_m);
        std::size_t next_e = expected.find('-', consumed_e);
        std::string_view part_m = mention.substr(
            consumed_m, next_m == std::string_view::npos ? std::string_view::npos
                                                         : next_m - consumed_m);
        std::string_view part_e = expected.substr(
            consumed_e, next_e == std::string_view::npos ? std::string_view::npos
                                                         : next_e - consumed_e);
        if (part_m != part_e) return false;
        if (next_m == std::string_view::npos || next_e == std::string_view::npos)
            return c + 1 >= count;
        consumed_m = next_m + 1;
        consumed_e = next_e + 1;
    }
    return true;
}

bool supports_date(const MemoryItem& item, const Requirement& requirement,
                   DateGranularity granularity) {
    auto item_tokens = tokenize(item.text);
    for (const auto& anchor : requirement.anchors) {
        if (!contains_token_phrase(item_tokens, anchor)) return false;
    }
    const int needed = components(granularity);
    const int expected_known =
        requirement.value.empty() ? 0 : date_components(requirement.value);
    for (const auto& mention : extract_partial_dates(item)) {
        if (date_components(mention) < needed) continue;
        if (expected_known > 0 &&
            !prefix_compatible(mention, requirement.value,
                               std::min(needed, expected_known)))
            continue;
        return true;
    }
    return false;
}

std::set<std::string> requirement_ids(const RequirementSpace& space) {
    std::set<std::string> ids;
    for (const auto& requirement : space.requirements) ids.insert(requirement.id);
    return ids;
}

} // namespace

std::vector<std::string> extract_partial_dates(const MemoryItem& item) {
    std::vector<std::string> mentions;
    scan_dates(item.text, mentions);
    for (const auto& [key, value] : item.metadata) {
        (void)key;
        scan_dates(value, mentions);
    }
    std::sort(mentions.begin(), mentions.end());
    mentions.erase(std::unique(mentions.begin(), mentions.end()), mentions.end());
    return mentions;
}

bool supports(const MemoryItem& item, const Requirement& requirement) {
    switch (requirement.kind) {
        case Requirement::Kind::token:
            return contains_token_phrase(tokenize(item.text), requirement.phrase);
        case Requirement::Kind::metadata: {
            auto it = item.metadata.find(requirement.key);
            return it != item.metadata.end() && fold(it->second) == fold(requirement.value);
        }
        case Requirement::Kind::date:
            return supports_date(item, requirement, requirement.granularity);
    }
    return false;
}

IdealState initial_state(const RequirementSpace& space) {
    IdealState state;
    state.remaining = requirement_ids(space);
    return state;
}

IdealState ideal_update(const IdealState& state, const Batch& batch,
                        const RequirementSpace& space) {
    IdealState next;
    next.established = state.established;
    for (const auto& requirement : space.requirements) {
        if (next.established.count(requirement.id)) continue;
        for (const auto& item : batch) {
            if (supports(item, requirement)) {
                next.established.insert(requirement.id);
                break;
            }
        }
    }
    for (const auto& requirement : space.requirements) {
        if (!next.established.count(requirement.id)) next.remaining.insert(requirement.id);
    }
    return next;
}

std::vector<IdealState> run_ideal_episode(const RequirementSpace& space,
                                          const std::vector<Batch>& schedule) {
    std::vector<IdealState> trace;
    trace.reserve(schedule.size() + 1);
    trace.push_back(initial_state(space));
    for (const auto& batch : schedule)
        trace.push_back(ideal_update(trace.back(), batch, space));
    return trace;
}

std::vector<IdealState> run_ideal_episode(
    const RequirementSpace& space, const std::vector<MemoryItem>& store,
    const std::vector<std::vector<std::string>>& schedule_ids) {
    std::unordered_map<std::string, const MemoryItem*> by_id;
    for (const auto& item : store) by_id[item.id] = &item;
    std::vector<Batch> schedule;
    schedule.reserve(schedule_ids.size());
    for (const auto& batch_ids : schedule_ids) {
        Batch batch;
        batch.reserve(batch_ids.size());
        for (const auto& id : batch_ids) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw std::invalid_argument("schedule references unknown memory item \"" +
                                            id + "\"");
            batch.push_back(*it->second);
        }
        schedule.push_back(std::move(batch));
    }
    return run_ideal_episode(space, schedule);
}

AuditReport verify_trace_properties(const std::vector<IdealState>& trace,
                                    const RequirementSpace& space,
                                    const std::vector<Batch>& schedule) {
    if (trace.size() != schedule.size() + 1)
        throw std::invalid_argument("trace length must be schedule length + 1");

    AuditReport report;
    const auto all_ids = requirement_ids(space);

    // Brute-force oracle, recomputed from the support relation alone:
    // supported_cumulative[k] = requirements witnessed by any item in the
    // first k batches.
    std::vector<std::set<std::string>> supported_cumulative(trace.size());
    std::vector<std::set<std::string>> supported_in_batch(trace.size());
    for (std::size_t k = 1; k < trace.size(); ++k) {
        supported_cumulative[k] = supported_cumulative[k - 1];
        for (const auto& requirement : space.requirements) {
            for (const auto& item : schedule[k - 1]) {
                if (supports(item, requirement)) {
                    supported_in_batch[k].insert(requirement.id);
                    supported_cumulative[k].insert(requirement.id);
                    break;
                }
            }
        }
    }

    for (std::size_t k = 0; k < trace.size(); ++k) {
        const auto& state = trace[k];
        std::set<std::string> unioned;
        std::set_union(state.established.begin(), state.established.end(),
                       state.remaining.begin(), state.remaining.end(),
                       std::inserter(unioned, unioned.begin()));
        bool disjoint = std::none_of(
            state.established.begin(), state.established.end(),
            [&](const std::string& id) { return state.remaining.count(id) > 0; });
        if (unioned != all_ids || !disjoint) {
            report.violations.push_back({"partition", static_cast<int>(k), "",
                                         "established/remaining do not partition R(q)"});
        }
    }

    for (std::size_t k = 1; k < trace.size(); ++k) {
        for (const auto& id : trace[k - 1].established) {
            if (!trace[k].established.count(id)) {
                report.violations.push_back({"monotonicity", static_cast<int>(k), id,
                                             "established requirement disappeared"});
            }
        }
        for (const auto& id : trace[k].remaining) {
            if (!trace[k - 1].remaining.count(id)) {
                report.violations.push_back({"monotonicity", static_cast<int>(k), id,
                                             "gap reappeared after being closed"});
            }
        }
        for (const auto& id : supported_in_batch[k]) {
            if (!trace[k].established.count(id)) {
                report.violations.push_back({"soundness", static_cast<int>(k), id,
                                             "supported by the step's batch but not established"});
            }
        }
    }

    if (supported_cumulative.back() == all_ids && !trace.back().remaining.empty()) {
        report.violations.push_back({"completeness", static_cast<int>(trace.size() - 1), "",
                                     "all requirements supported but the gap is non-empty"});
    }

    // Deviation taxonomy. Violations above are hard failures; these
    // classify how an approximate tracker drifted from the ideal (or why an
    // ideal gap is structurally unclosable).
    std::set<std::string> diagnosed_coverage;
    std::set<std::string> diagnosed_hallucination;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        for (const auto& id : trace[k].established) {
            if (!supported_cumulative[k].count(id) && diagnosed_hallucination.insert(id).second) {
                report.diagnoses.push_back({"hallucination", id, static_cast<int>(k),
                                            "established without any supporting item"});
            }
        }
        for (const auto& id : supported_cumulative[k]) {
            if (!trace[k].established.count(id) && diagnosed_coverage.insert(id).second) {
                report.diagnoses.push_back({"coverage", id, static_cast<int>(k),
                                            "supported but missing from the evidence set"});
            }
        }
    }

    for (const auto& requirement : space.requirements) {
        if (supported_cumulative.back().count(requirement.id)) continue;
        bool coarser_witness = false;
        std::string coarser_level;
        if (requirement.kind == Requirement::Kind::date) {
            for (auto level : {DateGranularity::year_month, DateGranularity::year}) {
                if (components(level) >= components(requirement.granularity)) continue;
                for (const auto& batch : schedule) {
                    for (const auto& item : batch) {
                        if (supports_date(item, requirement, level)) {
                            coarser_witness = true;
                            coarser_level = to_string(level);
                            break;
                        }
                    }
                    if (coarser_witness) break;
                }
                if (coarser_witness) break;
            }
        }
        if (coarser_witness) {
            report.diagnoses.push_back(
                {"granularity", requirement.id, -1,
                 "requires " + std::string(to_string(requirement.granularity)) +
                     " precision but the schedule only witnesses it at " + coarser_level});
        } else {
            report.diagnoses.push_back({"uncovered", requirement.id, -1,
                                        "no scheduled item supports this requirement"});
        }
    }

    return report;
}

namespace {

Requirement parse_requirement(const json& doc, std::size_t index) {
    auto at = [&](const char* key) -> const json& {
        if (!doc.contains(key))
            throw SchemaError("requirements[" + std::to_string(index) + "]: missing \"" +
                              key + "\"");
        return doc[key];
    };
    Requirement requirement;
    requirement.id = at("id").get<std::string>();
    std::string kind = at("kind").get<std::string>();
    if (kind == "token") {
        requirement.kind = Requirement::Kind::token;
        requirement.phrase = doc.value("phrase", "");
    } else if (kind == "metadata") {
        requirement.kind = Requirement::Kind::metadata;
        requirement.key = at("key").get<std::string>();
        requirement.value = at("value").get<std::string>();
    } else if (kind == "date") {
        requirement.kind = Requirement::Kind::date;
        requirement.value = doc.value("value", "");
        if (doc.contains("anchors")) {
            for (const auto& anchor : doc["anchors"])
                requirement.anchors.push_back(anchor.get<std::string>());
        }
        auto granularity = granularity_from_string(doc.value("granularity", "year"));
        if (!granularity)
            throw SchemaError("requirements[" + std::to_string(index) +
                              "]: granularity must be year, year-month, or year-month-day");
        requirement.granularity = *granularity;
    } else {
        throw SchemaError("requirements[" + std::to_string(index) +
                          "]: kind must be token, metadata, or date");
    }
    return requirement;
}

} // namespace

Scenario parse_scenario(const json& doc) {
    if (!doc.is_object()) throw SchemaError("scenario: top level must be a JSON object");
    Scenario scenario;
    scenario.space.query_id = doc.value("query_id", "");

    if (!doc.contains("requirements") || !doc["requirements"].is_array() ||
        doc["requirements"].empty())
        throw SchemaError("scenario: \"requirements\" must be a non-empty array");
    std::set<std::string> seen_requirements;
    for (std::size_t i = 0; i < doc["requirements"].size(); ++i) {
        auto requirement = parse_requirement(doc["requirements"][i], i);
        if (!seen_requirements.insert(requirement.id).second)
            throw SchemaError("requirements[" + std::to_string(i) + "]: duplicate id \"" +
                              requirement.id + "\"");
        scenario.space.requirements.push_back(std::move(requirement));
    }

    if (!doc.contains("memory_items") || !doc["memory_items"].is_array())
        throw SchemaError("scenario: \"memory_items\" must be an array");
    std::set<std::string> seen_items;
    for (std::size_t i = 0; i < doc["memory_items"].size(); ++i) {
        const auto& entry = doc["memory_items"][i];
        MemoryItem item;
        if (!entry.contains("id") || !entry.contains("text"))
            throw SchemaError("memory_items[" + std::to_string(i) +
                              "]: \"id\" and \"text\" are required");
        item.id = entry["id"].get<std::string>();
        item.text = entry["text"].get<std::string>();
        if (entry.contains("metadata")) {
            for (const auto& [key, value] : entry["metadata"].items())
                item.metadata[key] = value.get<std::string>();
        }
        if (!seen_items.insert(item.id).second)
            throw SchemaError("memory_items[" + std::to_string(i) + "]: duplicate id \"" +
                              item.id + "\"");
        scenario.store.push_back(std::move(item));
    }

    if (!doc.contains("schedule") || !doc["schedule"].is_array())
        throw SchemaError("scenario: \"schedule\" must be an array of id batches");
    for (std::size_t i = 0; i < doc["schedule"].size(); ++i) {
        const auto& entry = doc["schedule"][i];
        if (!entry.is_array())
            throw SchemaError("schedule[" + std::to_string(i) + "]: must be an array of ids");
        std::vector<std::string> batch;
        for (const auto& id : entry) {
            auto value = id.get<std::string>();
            if (!seen_items.count(value))
                throw SchemaError("schedule[" + std::to_string(i) + "]: unknown item \"" +
                                  value + "\"");
            batch.push_back(std::move(value));
        }
        scenario.schedule.push_back(std::move(batch));
    }
    return scenario;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open scenario file: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("scenario file is not valid JSON: " + path.string());
    return parse_scenario(doc);
}

json state_to_json(const IdealState& state) {
    json doc;
    doc["established"] = state.established;
    doc["remaining"] = state.remaining;
    return doc;
}

json report_to_json(const AuditReport& report, const std::vector<IdealState>& trace) {
    json doc;
    doc["ok"] = report.ok();
    doc["states"] = json::array();
    for (const auto& state : trace) doc["states"].push_back(state_to_json(state));
    doc["violations"] = json::array();
    for (const auto& violation : report.violations) {
        doc["violations"].push_back({{"kind", violation.kind},
                                     {"step", violation.step},
                                     {"requirement_id", violation.requirement_id},
                                     {"detail", violation.detail}});
    }
    doc["diagnoses"] = json::array();
    for (const auto& diagnosis : report.diagnoses) {
        doc["diagnoses"].push_back({{"bias", diagnosis.bias},
                                    {"requirement_id", diagnosis.requirement_id},
                                    {"step", diagnosis.step},
                                    {"detail", diagnosis.detail}});
    }
    return doc;
}

} // namespace memr3::ideal
