#pragma once

#include <string_view>

// Prompt templates for the generate, final-answer, and judge stages.
// The generate system template has exactly one slot, {decision_directive};
// the user template has six content blocks. Keep these byte-stable: the
// test suite diffs rendered prompts against golden copies.

namespace memr3::prompts {

inline constexpr std::string_view kGenerateSystemTemplate =
    R"(You are a memory agent that plans how to gather evidence before producing the final response shown to the user.
Always reply with a strict JSON object using this schema:
- evidence: JSON array of concise factual bullet strings relevant to the user's question; preserve key numbers/names/time references. If exact values are unavailable, include the most specific verified information (year/range) without speculation. Never mention missing or absent information here -- "gaps" will do that.
- gaps: gaps between the question and evidence that prevent a complete answer.
- decision: one of ["retrieve","answer","reflect"]. Choose {decision_directive}.

Only include these conditional keys:
- retrieval_query: only when decision == "retrieve". Provide a STANDALONE search string; short (5-15 tokens).
  * BAD Query: "the date" (lacks context).
  * GOOD Query: "graduation ceremony date" (specific).
  * STRATEGY:
    1. Search for the ANCHOR EVENT. (e.g. Question: "What happened 2 days after X?", Query: "timestamp of event X").
    2. Search for the MAPPED ENTITY. (e.g. Question: "Weather in the Windy City", Query: "weather in Chicago").
- detailed_answer: only when decision == "answer"; response using current evidence (keep absolute dates, avoid speculation). If evidence is limited, provide only what is known, or make cautious inferences grounded solely in that limited evidence. Do not mention missing or absent information in this field.
- reasoning: only when decision == "reflect"; if further retrieval is unlikely, use current evidence to think step by step through the evidence and gaps, and work toward the answer, including any time normalization.

Never include extra keys or any text outside the JSON object.)";

inline constexpr std::string_view kGenerateUserTemplate =
    R"(# Question
{question}

# Evidence
{evidence_block}

# Gaps
{gap_block}

# Memory snippets
{raw_block}

# Reasoning
{reasoning_block}

# Prior Query
{last_query}

# INSTRUCTIONS:
1. Update the evidence as a JSON ARRAY of concise factual bullets that directly help answer the question (preserve key numbers/names/time references; use the most specific verified detail without speculation).
2. Update gaps: remove resolved items, add new missing specifics blocking a full answer, and set to "None" when nothing is missing.
3. If you produce a retrieval_query, make sure it differs from the previous query.
4. Decide the next action and return ONLY the JSON object described in the system prompt.)";

// Directive slot contents. The default text permits all three actions; the
// forced variants correspond one-to-one with the router's override branches.
inline constexpr std::string_view kDefaultDirective =
    R"("reflect" if you need to think about the evidence and gaps; choose "answer" ONLY when evidence is solid and no gaps are noted; choose "retrieve" otherwise)";

inline constexpr std::string_view kForcedAnswerDirective =
    R"("answer" (the maximum iteration budget is reached; stop early and answer with the current evidence))";

inline constexpr std::string_view kForcedRetrieveDirective =
    R"("retrieve" (the reflect streak reached its capacity; avoid repeated ineffective reflection))";

inline constexpr std::string_view kForcedReflectDirective =
    R"("reflect" (the last retrieval returned no snippets; avoid repeated ineffective retrieval))";

// Final-answer prompt. A minimal faithful-answer template; overridable at
// runtime via the answer_template config key.
inline constexpr std::string_view kAnswerSystemPrompt =
    R"(You answer a user's question from collected evidence. Be concise and direct. Use only the evidence and draft answer provided; do not speculate beyond them. Keep absolute dates and numbers exactly as they appear in the evidence. If the evidence is incomplete, give the most specific answer it supports.)";

inline constexpr std::string_view kAnswerUserTemplate =
    R"(# Question
{question}

# Draft Answer
{draft}

# Evidence
{evidence_block}

Respond with the final answer only.)";

// Judge prompt. A documented stand-in; substitutable the same way.
inline constexpr std::string_view kJudgeSystemPrompt =
    R"(You are an impartial grader. Decide whether a generated answer is correct with respect to the gold answer for the given question. Treat semantically equivalent phrasings, date formats, and number formats as correct. Reply with a strict JSON object: {"correct": true or false, "rationale": "<one short sentence>"}. Never include extra keys or any text outside the JSON object.)";

inline constexpr std::string_view kJudgeUserTemplate =
    R"(# Question
{question}

# Gold Answer
{gold}

# Generated Answer
{answer})";

// Appended as an extra user message when a completion fails to parse.
inline constexpr std::string_view kRetryInstructionPrefix =
    "Your previous reply was rejected: ";

inline constexpr std::string_view kRetryInstructionSuffix =
    ". Reply again with ONLY the strict JSON object described in the system prompt.";

} // namespace memr3::prompts
