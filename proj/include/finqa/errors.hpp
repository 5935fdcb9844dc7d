#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace finqa {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- program / numeral errors ----

struct ParseError : Error {
    ParseError(std::size_t position, std::string expected_what)
        : Error("parse error at position " + std::to_string(position) + ": expected " +
                expected_what),
          position(position),
          expected(std::move(expected_what)) {}
    std::size_t position;
    std::string expected;
};

struct UnsupportedOperator : Error {
    explicit UnsupportedOperator(const std::string& token)
        : Error("unsupported operator: " + token), token(token) {}
    std::string token;
};

struct ForwardReference : Error {
    ForwardReference(int ref_index, std::size_t step_index)
        : Error("step " + std::to_string(step_index + 1) + " references #" +
                std::to_string(ref_index) + ", which is not an earlier step"),
          ref_index(ref_index),
          step_index(step_index) {}
    int ref_index;
    std::size_t step_index;
};

struct DivisionByZero : Error {
    explicit DivisionByZero(std::size_t step_index)
        : Error("division by zero at step " + std::to_string(step_index + 1)),
          step_index(step_index) {}
    std::size_t step_index;
};

struct NonFiniteResult : Error {
    explicit NonFiniteResult(std::size_t step_index)
        : Error("non-finite result at step " + std::to_string(step_index + 1)),
          step_index(step_index) {}
    std::size_t step_index;
};

struct NotANumber : Error {
    explicit NotANumber(const std::string& token)
        : Error("not a number: \"" + token + "\""), token(token) {}
    std::string token;
};

// ---- file / dataset errors ----

struct FileNotFound : Error {
    explicit FileNotFound(const std::string& path) : Error("file not found: " + path) {}
};

struct MalformedFile : Error {
    explicit MalformedFile(const std::string& what) : Error("malformed file: " + what) {}
};

// ---- serialization / retrieval errors ----

struct EmptyTable : Error {
    EmptyTable() : Error("table has no data cells") {}
};

struct EmptyText : Error {
    EmptyText() : Error("text has no tokens") {}
};

struct MissingExemplarAsset : Error {
    explicit MissingExemplarAsset(const std::string& what)
        : Error("missing exemplar asset: " + what) {}
};

struct MissingTemplateAsset : Error {
    explicit MissingTemplateAsset(const std::string& what)
        : Error("missing prompt template asset: " + what) {}
};

struct EmbedderFailure : Error {
    explicit EmbedderFailure(const std::string& what) : Error("embedder failure: " + what) {}
};

// ---- generation client errors ----

struct GenerationError : Error {
    using Error::Error;
};

struct Timeout : GenerationError {
    explicit Timeout(const std::string& what) : GenerationError("timeout: " + what) {}
};

struct HttpStatus : GenerationError {
    explicit HttpStatus(int code)
        : GenerationError("http status " + std::to_string(code)), code(code) {}
    int code;
};

struct MalformedResponse : GenerationError {
    explicit MalformedResponse(const std::string& what)
        : GenerationError("malformed response: " + what) {}
};

struct RateLimited : GenerationError {
    RateLimited() : GenerationError("rate limited after retries") {}
};

struct ReplayMiss : GenerationError {
    explicit ReplayMiss(const std::string& key)
        : GenerationError("no transcript entry for key " + key), key(key) {}
    std::string key;
};

struct TranscriptError : Error {
    using Error::Error;
};

// ---- metrics / pipeline errors ----

struct StepCountMismatch : Error {
    StepCountMismatch(std::size_t predicted, std::size_t gold)
        : Error("step count mismatch: predicted " + std::to_string(predicted) + ", gold " +
                std::to_string(gold)),
          predicted(predicted),
          gold(gold) {}
    std::size_t predicted;
    std::size_t gold;
};

struct MissingPrediction : Error {
    MissingPrediction() : Error("no predicted value") {}
};

struct EmptyRun : Error {
    EmptyRun() : Error("run contains no examples") {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

}  // namespace finqa
