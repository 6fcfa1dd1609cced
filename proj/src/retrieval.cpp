#include "memr3/retrieval.hpp"

#include "memr3/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace memr3 {

using nlohmann::json;

namespace {

constexpr double kBm25K1 = 1.2;
constexpr double kBm25B = 0.75;
constexpr int kCharsPerToken = 4;

std::string flatten(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return out;
}

std::string marker_prefix(const Utterance& utterance) {
    return "[" + flatten(utterance.timestamp) + "] " + flatten(utterance.speaker) + ": ";
}

} // namespace

int approx_token_count(std::string_view text) {
    if (text.empty()) return 0;
    return static_cast<int>((text.size() + kCharsPerToken - 1) / kCharsPerToken);
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string compose_query(const std::string& question,
                          const std::optional<std::string>& refinement) {
    if (question.empty()) throw std::invalid_argument("compose_query: empty question");
    if (!refinement || refinement->empty()) return question;
    return question + "\n" + *refinement;
}

std::vector<Snippet> chunk_conversation(const std::vector<Utterance>& dialogue,
                                        int chunk_tokens, const std::string& source,
                                        const TokenEstimator& estimator) {
    if (chunk_tokens < 16)
        throw std::invalid_argument("chunk_conversation: chunk_tokens must be >= 16");
    if (dialogue.empty()) throw EmptyDialogue("chunk_conversation: no utterances");

    TokenEstimator estimate = estimator ? estimator : TokenEstimator(approx_token_count);

    std::vector<Snippet> chunks;
    std::string current;

    auto flush = [&] {
        if (current.empty()) return;
        Snippet snippet;
        snippet.position = static_cast<int>(chunks.size());
        snippet.id = source + ":" + std::to_string(snippet.position);
        snippet.source = source;
        snippet.text = std::move(current);
        snippet.token_estimate = estimate(snippet.text);
        chunks.push_back(std::move(snippet));
        current.clear();
    };

    auto append_line = [&](const std::string& line) {
        std::string tentative = current.empty() ? line : current + "\n" + line;
        if (!current.empty() && estimate(tentative) > chunk_tokens) {
            flush();
            current = line;
        } else {
            current = std::move(tentative);
        }
    };

    for (const auto& utterance : dialogue) {
        std::string prefix = marker_prefix(utterance);
        std::string text = flatten(utterance.text);
        std::string line = prefix + text;
        if (estimate(line) <= chunk_tokens) {
            append_line(line);
            continue;
        }
        // A single utterance over the whole budget: cut at the budget
        // boundary. Only the first piece carries the marker; continuation
        // pieces are bare text so marker stripping reconstructs the
        // original.
        flush();
        std::size_t budget_chars = static_cast<std::size_t>(chunk_tokens) * kCharsPerToken;
        std::size_t first_len = budget_chars > prefix.size() ? budget_chars - prefix.size() : 1;
        first_len = std::min(first_len, text.size());
        current = prefix + text.substr(0, first_len);
        flush();
        for (std::size_t offset = first_len; offset < text.size(); offset += budget_chars) {
            current = text.substr(offset, budget_chars);
            flush();
        }
    }
    flush();
    return chunks;
}

std::string strip_chunk_markers(const std::string& chunk_text) {
    std::ostringstream out;
    std::size_t start = 0;
    bool first = true;
    while (start <= chunk_text.size()) {
        std::size_t end = chunk_text.find('\n', start);
        std::string line = chunk_text.substr(
            start, end == std::string::npos ? std::string::npos : end - start);
        if (!line.empty() && line.front() == '[') {
            std::size_t close = line.find("] ");
            if (close != std::string::npos) {
                std::size_t colon = line.find(": ", close + 2);
                if (colon != std::string::npos) line = line.substr(colon + 2);
            }
        }
        if (!first) out << '\n';
        out << line;
        first = false;
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out.str();
}

ChunkStore::ChunkStore(std::vector<Snippet> snippets) : snippets_(std::move(snippets)) {
    docs_.reserve(snippets_.size());
    long long total_length = 0;
    for (const auto& snippet : snippets_) {
        DocStats stats = stats_for(snippet);
        total_length += stats.length;
        for (const auto& [term, count] : stats.term_counts) {
            (void)count;
            doc_freq_[term] += 1;
        }
        docs_.push_back(std::move(stats));
    }
    avg_length_ = snippets_.empty()
                      ? 1.0
                      : static_cast<double>(total_length) /
                            static_cast<double>(snippets_.size());
    if (avg_length_ <= 0.0) avg_length_ = 1.0;
}

ChunkStore::DocStats ChunkStore::stats_for(const Snippet& snippet) const {
    DocStats stats;
    auto tokens = tokenize(snippet.text);
    stats.length = static_cast<int>(tokens.size());
    for (auto& token : tokens) stats.term_counts[token] += 1;
    return stats;
}

double ChunkStore::score_stats(const std::vector<std::string>& query_terms,
                               const DocStats& stats) const {
    const double doc_count = static_cast<double>(snippets_.size());
    const double length_norm =
        1.0 - kBm25B + kBm25B * static_cast<double>(stats.length) / avg_length_;
    double total = 0.0;
    for (const auto& term : query_terms) {
        auto tf_it = stats.term_counts.find(term);
        if (tf_it == stats.term_counts.end()) continue;  // absent term contributes 0
        auto df_it = doc_freq_.find(term);
        const double df = df_it == doc_freq_.end() ? 0.0 : df_it->second;
        const double idf = std::log(1.0 + (doc_count - df + 0.5) / (df + 0.5));
        const double tf = tf_it->second;
        total += idf * tf * (kBm25K1 + 1.0) / (tf + kBm25K1 * length_norm);
    }
    return total;
}

namespace {

std::vector<std::string> distinct_terms(const std::string& query) {
    auto tokens = tokenize(query);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return tokens;
}

} // namespace

double ChunkStore::score(const std::string& query, const Snippet& snippet) const {
    auto terms = distinct_terms(query);
    for (std::size_t i = 0; i < snippets_.size(); ++i) {
        if (snippets_[i].id == snippet.id) return score_stats(terms, docs_[i]);
    }
    return score_stats(terms, stats_for(snippet));
}

std::vector<Snippet> ChunkStore::retrieve(const std::string& query,
                                          const std::set<SnippetId>& exclude,
                                          int limit) const {
    if (limit <= 0) return {};
    auto terms = distinct_terms(query);

    struct Scored {
        double score;
        std::size_t index;
    };
    std::vector<Scored> scored;
    scored.reserve(snippets_.size());
    for (std::size_t i = 0; i < snippets_.size(); ++i) {
        if (exclude.count(snippets_[i].id)) continue;
        scored.push_back({score_stats(terms, docs_[i]), i});
    }
    auto by_score = [this](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return snippets_[a.index].id < snippets_[b.index].id;
    };
    std::sort(scored.begin(), scored.end(), by_score);

    if (reranker_) {
        std::size_t pool = std::min<std::size_t>(scored.size(),
                                                 static_cast<std::size_t>(limit) * 4);
        std::vector<Snippet> candidates;
        candidates.reserve(pool);
        for (std::size_t i = 0; i < pool; ++i) candidates.push_back(snippets_[scored[i].index]);
        auto rerank_scores = reranker_(query, candidates);
        if (rerank_scores.size() == pool) {
            std::vector<Scored> reranked;
            reranked.reserve(pool);
            for (std::size_t i = 0; i < pool; ++i)
                reranked.push_back({rerank_scores[i], scored[i].index});
            std::sort(reranked.begin(), reranked.end(), by_score);
            scored.assign(reranked.begin(), reranked.end());
        }
    }

    std::vector<Snippet> out;
    out.reserve(std::min<std::size_t>(scored.size(), static_cast<std::size_t>(limit)));
    for (const auto& entry : scored) {
        if (static_cast<int>(out.size()) >= limit) break;
        out.push_back(snippets_[entry.index]);
    }
    return out;
}

std::vector<Snippet> retrieve_masked(const std::string& query,
                                     const RetrieverBackend& store,
                                     const std::set<SnippetId>& used, int n_chk) {
    if (n_chk < 1) throw std::invalid_argument("retrieve_masked: n_chk must be >= 1");
    auto results = store.retrieve(query, used, n_chk);
    // Enforce the contract even over a sloppy backend: no used ids, no
    // duplicates, at most n_chk snippets, backend order preserved.
    std::vector<Snippet> out;
    std::set<SnippetId> seen;
    for (auto& snippet : results) {
        if (static_cast<int>(out.size()) >= n_chk) break;
        if (used.count(snippet.id) || !seen.insert(snippet.id).second) continue;
        out.push_back(std::move(snippet));
    }
    return out;
}

void save_store(const std::filesystem::path& dir, const ChunkStore& store,
                const StoreManifest& manifest) {
    std::filesystem::create_directories(dir);

    json manifest_doc;
    manifest_doc["chunk_tokens"] = manifest.chunk_tokens;
    manifest_doc["format_version"] = manifest.format_version;
    manifest_doc["snippet_count"] = static_cast<int>(store.size());
    manifest_doc["source"] = manifest.source;
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
        out << manifest_doc.dump(2) << '\n';
    }

    std::ofstream lines(dir / "snippets.jsonl", std::ios::binary);
    if (!lines) throw std::runtime_error("cannot write " + (dir / "snippets.jsonl").string());
    for (const auto& snippet : store.snippets()) {
        json record;
        record["id"] = snippet.id;
        record["position"] = snippet.position;
        record["source"] = snippet.source;
        record["text"] = snippet.text;
        record["token_estimate"] = snippet.token_estimate;
        lines << record.dump() << '\n';
    }
}

ChunkStore load_store(const std::filesystem::path& dir, StoreManifest* manifest_out) {
    std::ifstream manifest_in(dir / "manifest.json", std::ios::binary);
    if (!manifest_in) throw SchemaError("store manifest not found: " + (dir / "manifest.json").string());
    json manifest_doc = json::parse(manifest_in, nullptr, false);
    if (!manifest_doc.is_object()) throw SchemaError("store manifest is not a JSON object");
    StoreManifest manifest;
    manifest.chunk_tokens = manifest_doc.value("chunk_tokens", 0);
    manifest.format_version = manifest_doc.value("format_version", 0);
    manifest.snippet_count = manifest_doc.value("snippet_count", 0);
    manifest.source = manifest_doc.value("source", "");
    if (manifest.format_version != 1)
        throw SchemaError("unsupported store format_version in " + dir.string());

    std::ifstream lines(dir / "snippets.jsonl", std::ios::binary);
    if (!lines) throw SchemaError("store snippets not found: " + (dir / "snippets.jsonl").string());
    std::vector<Snippet> snippets;
    std::string line;
    int line_number = 0;
    while (std::getline(lines, line)) {
        ++line_number;
        if (line.empty()) continue;
        json record = json::parse(line, nullptr, false);
        if (!record.is_object())
            throw SchemaError("snippets.jsonl line " + std::to_string(line_number) +
                              ": not a JSON object");
        Snippet snippet;
        try {
            snippet.id = record.at("id").get<std::string>();
            snippet.position = record.at("position").get<int>();
            snippet.source = record.at("source").get<std::string>();
            snippet.text = record.at("text").get<std::string>();
            snippet.token_estimate = record.at("token_estimate").get<int>();
        } catch (const json::exception& e) {
            throw SchemaError("snippets.jsonl line " + std::to_string(line_number) + ": " +
                              e.what());
        }
        snippets.push_back(std::move(snippet));
    }
    if (manifest.snippet_count != static_cast<int>(snippets.size()))
        throw SchemaError("store manifest snippet_count mismatch in " + dir.string());
    if (manifest_out) *manifest_out = manifest;
    return ChunkStore(std::move(snippets));
}

} // namespace memr3
