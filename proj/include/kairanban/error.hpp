#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kairanban {

enum class ErrorCode {
    // core
    AllZero,
    NegativeEntry,
    PlaceholderInput,
    InvalidLabelSpace,
    InvalidDistribution,
    // backend
    TransportError,
    AuthError,
    RateLimited,
    ScriptExhausted,
    // prompting
    MissingPredecessor,
    MissingSteps,
    ParseFailure,
    LabelMismatch,
    NonNumeric,
    TemplateError,
    // orchestrator
    EmptyInstance,
    MissingAnalysis,
    InvalidConfig,
    // datasets
    FileNotFound,
    MalformedRow,
    UnknownLabel,
    SampleTooLarge,
    // metrics
    EmptyRecords,
    LengthMismatch,
    // experiment
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (and tests) can branch on the kind without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace kairanban
