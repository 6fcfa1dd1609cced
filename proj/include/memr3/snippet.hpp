#pragma once

#include <string>
#include <string_view>

namespace memr3 {

using SnippetId = std::string;

// One retrievable memory unit. Ids are stable across runs for identical
// input: "<source>:<position>".
struct Snippet {
    SnippetId id;
    std::string text;
    std::string source;    // conversation / session identifier
    int position = 0;      // ordinal within the source
    int token_estimate = 0;

    bool operator==(const Snippet&) const = default;
};

// Cheap chars/4 heuristic. Swap in a real tokenizer by passing a custom
// estimator to the chunker.
int approx_token_count(std::string_view text);

} // namespace memr3
