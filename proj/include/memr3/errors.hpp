#pragma once

#include <stdexcept>

namespace memr3 {

// Failures of the strict-JSON generate protocol. Both tell the caller to
// retry; they stay distinct so the corrective retry message can quote the
// exact problem.
class OutputParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Completion text did not contain exactly one parseable JSON object.
class MalformedOutput : public OutputParseError {
public:
    using OutputParseError::OutputParseError;
};

// JSON object parsed but breaks the schema (keys, types, decision enum,
// conditional-key exclusivity).
class SchemaViolation : public OutputParseError {
public:
    using OutputParseError::OutputParseError;
};

// Network or HTTP-level failure talking to a chat backend.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A retriever backend could not be reached.
class BackendUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A scripted backend ran past the end of its script: test misconfiguration.
class ScriptExhausted : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A scripted step's expectation did not match the incoming request.
class ScriptMismatch : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Chunking input had no utterances.
class EmptyDialogue : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dataset / scenario / store file does not match the expected schema.
// Messages carry a path to the offending record.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace memr3
