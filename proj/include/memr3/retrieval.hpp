#pragma once

// Conversation chunking, the built-in lexical store, query composition,
// and masked retrieval. The controller owns the used-id set and passes it
// as an exclusion filter, so backends without native masking still comply.

#include "memr3/snippet.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace memr3 {

struct Utterance {
    std::string speaker;
    std::string timestamp;
    std::string text;
};

// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view text);

using TokenEstimator = std::function<int(std::string_view)>;

// Greedy packing of consecutive utterances into chunks of at most
// chunk_tokens estimated tokens. A single utterance is never split unless
// it alone exceeds the budget; then it is cut at the budget boundary and
// the continuation pieces become chunks of their own (without a marker
// line, so stripping markers reconstructs the original text). Every chunk
// line is "[timestamp] speaker: text" with newlines in the utterance text
// flattened to spaces.
std::vector<Snippet> chunk_conversation(const std::vector<Utterance>& dialogue,
                                        int chunk_tokens,
                                        const std::string& source = "conv",
                                        const TokenEstimator& estimator = nullptr);

// q unchanged when the refinement is absent or empty; otherwise the two
// joined by a newline, original question first.
std::string compose_query(const std::string& question,
                          const std::optional<std::string>& refinement);

// Plug-in contract for concrete retrievers. Implementations must return at
// most `limit` snippets, all ids distinct, none in `exclude`, in a
// deterministic order.
class RetrieverBackend {
public:
    virtual ~RetrieverBackend() = default;
    virtual std::string name() const = 0;
    virtual bool supports_native_masking() const = 0;
    virtual std::vector<Snippet> retrieve(const std::string& query,
                                          const std::set<SnippetId>& exclude,
                                          int limit) const = 0;
};

// Optional second-stage scorer over (query, candidate list); returns one
// score per candidate.
using Reranker = std::function<std::vector<double>(
    const std::string& query, const std::vector<Snippet>& candidates)>;

// In-memory BM25 store over chunk snippets. Immutable after construction;
// concurrent read-only retrieval is safe.
class ChunkStore : public RetrieverBackend {
public:
    ChunkStore() = default;
    explicit ChunkStore(std::vector<Snippet> snippets);

    std::string name() const override { return "bm25-chunks"; }
    bool supports_native_masking() const override { return true; }

    // Top-`limit` non-excluded snippets by (score desc, id asc). Snippets
    // with no lexical overlap still participate with score 0, so repeated
    // masked calls walk the whole store before coming back empty.
    std::vector<Snippet> retrieve(const std::string& query,
                                  const std::set<SnippetId>& exclude,
                                  int limit) const override;

    // BM25 relevance of one snippet under this corpus' statistics. Total
    // over arbitrary snippets (unknown terms score with df = 0).
    double score(const std::string& query, const Snippet& snippet) const;

    void set_reranker(Reranker reranker) { reranker_ = std::move(reranker); }

    const std::vector<Snippet>& snippets() const { return snippets_; }
    bool empty() const { return snippets_.empty(); }
    std::size_t size() const { return snippets_.size(); }

private:
    struct DocStats {
        std::unordered_map<std::string, int> term_counts;
        int length = 0;
    };
    DocStats stats_for(const Snippet& snippet) const;
    double score_stats(const std::vector<std::string>& query_terms,
                       const DocStats& stats) const;

    std::vector<Snippet> snippets_;
    std::vector<DocStats> docs_;
    std::unordered_map<std::string, int> doc_freq_;
    double avg_length_ = 0.0;
    Reranker reranker_;
};

// Eq.-style masked retrieval: up to n_chk top-scored snippets excluding
// `used`. Defensively filters and truncates whatever the backend returns,
// so the masking invariant holds even over a non-compliant backend. An
// empty result is exactly the router's "no retrieved snippets" condition.
std::vector<Snippet> retrieve_masked(const std::string& query,
                                     const RetrieverBackend& store,
                                     const std::set<SnippetId>& used, int n_chk);

// On-disk store format: <dir>/manifest.json + <dir>/snippets.jsonl.
// Re-ingesting identical input reproduces byte-identical files.
struct StoreManifest {
    std::string source;
    int chunk_tokens = 0;
    int snippet_count = 0;
    int format_version = 1;
};

void save_store(const std::filesystem::path& dir, const ChunkStore& store,
                const StoreManifest& manifest);
ChunkStore load_store(const std::filesystem::path& dir,
                      StoreManifest* manifest_out = nullptr);

// Strips the "[timestamp] speaker: " markers the chunker injects; used by
// the partition check and by full-context rendering.
std::string strip_chunk_markers(const std::string& chunk_text);

} // namespace memr3
