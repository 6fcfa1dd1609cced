#pragma once

// Long-conversation QA evaluation: dataset loading with the corrected
// category alignment and duplicate removal, episode execution in three
// modes (closed-loop, single-pass, full-context), LLM judging, and
// aggregation with repeated-run statistics.

#include "memr3/executor.hpp"
#include "memr3/gateway.hpp"
#include "memr3/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace memr3 {

// Fixed category alignment: 1 Multi-Hop, 2 Temporal, 3 Open-Domain,
// 4 Single-Hop, 5 Adversarial.
enum class Category {
    multi_hop = 1,
    temporal = 2,
    open_domain = 3,
    single_hop = 4,
    adversarial = 5,
};

const char* category_name(Category category);
std::optional<Category> category_from_id(int id);

struct QAItem {
    std::string conversation_id;
    int question_index = 0;  // 1-based ordinal in the source file
    std::string question;
    std::string gold_answer;
    int category_id = 0;

    Category category() const { return static_cast<Category>(category_id); }
    bool scored() const { return category_id >= 1 && category_id <= 4; }
};

struct Conversation {
    std::string id;
    std::vector<Utterance> utterances;  // sessions flattened in order
};

struct Dataset {
    std::vector<Conversation> conversations;
    std::vector<QAItem> qa_items;

    const Conversation* find_conversation(const std::string& id) const;
    std::map<int, int> category_counts() const;  // category id -> #items
};

// Parses a LoCoMo-schema file (array of samples with "conversation"
// session maps and a "qa" list) and removes the twelve known repeated
// questions by their (conversation ordinal, question ordinal) positions.
// Items keep their original 1-based indices, so re-running the removal on
// an already-deduplicated set removes nothing. Adversarial items are
// loaded but excluded from scoring downstream.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const nlohmann::json& doc);

// The positions removed by the realignment, as (conversation ordinal,
// question ordinal), both 1-based.
const std::vector<std::pair<int, int>>& duplicate_question_positions();

struct JudgeVerdict {
    bool correct = false;
    std::string rationale;
    bool flagged = false;  // judge output malformed twice; counted incorrect
};

PromptPair render_judge_prompt(const std::string& question, const std::string& gold,
                               const std::string& answer);

// Binary LLM-as-a-judge verdict. One retry on malformed output, then
// incorrect + flagged.
JudgeVerdict judge(const std::string& question, const std::string& gold,
                   const std::string& answer, ChatBackend& backend,
                   const std::string& model = "gpt-4.1", double temperature = 0.0);

enum class BenchMode { memr3, single_pass, full_context };
const char* to_string(BenchMode mode);
std::optional<BenchMode> bench_mode_from_string(std::string_view name);

struct BenchOptions {
    ExecutorOptions executor;
    BenchMode mode = BenchMode::memr3;
    int repeats = 1;
    int jobs = 1;
    int chunk_tokens = 256;
    std::optional<int> limit;  // cap on scored items, for slices
    std::string judge_model = "gpt-4.1";
    unsigned long long seed = 0;
};

struct ItemResult {
    std::string conversation_id;
    int question_index = 0;
    int category_id = 0;
    std::string question;
    std::string gold_answer;
    std::string answer;
    bool correct = false;
    bool flagged = false;
    bool failed = false;  // episode raised; counted incorrect
    std::string rationale;
    long long retrieved_tokens = 0;
    int run_index = 0;
};

struct RunReport {
    std::vector<ItemResult> items;  // every run, run_index marks the repeat
    std::map<std::string, double> category_j;      // mean J per category name
    std::map<std::string, double> category_j_std;  // sample std over repeats
    double overall_j = 0.0;
    double overall_j_std = 0.0;
    std::map<std::string, double> category_tokens;  // avg retrieved tokens
    double overall_tokens = 0.0;
    std::vector<std::string> excluded_categories;
    std::string config_digest;
    unsigned long long seed = 0;
    int repeats = 1;
};

// Runs every scored QA item through the selected mode, judges the answers,
// and aggregates per category and overall. Failed episodes are tolerated:
// counted incorrect and listed. With repeats > 1, J cells are
// mean ± sample standard deviation over the runs.
RunReport run_benchmark(const Dataset& dataset, const BenchOptions& options,
                        ChatBackend& agent_backend, ChatBackend& judge_backend);

// results.jsonl (one verdict per item), summary.json, summary.csv.
void write_report(const RunReport& report, const std::filesystem::path& dir);
nlohmann::json report_summary_json(const RunReport& report);
std::string report_summary_csv(const RunReport& report);

struct TokenSummary {
    double overall = 0.0;
    std::map<std::string, double> per_category;
};

// Average retrieved-snippet tokens from (category name, episode total)
// records.
TokenSummary token_report(const std::vector<std::pair<std::string, long long>>& per_item);
double average_retrieved_tokens(const std::vector<EpisodeTrace>& traces);

// FNV-1a over the canonical option encoding; recorded in reports so runs
// are attributable to an exact configuration.
std::string config_digest(const BenchOptions& options);

} // namespace memr3
