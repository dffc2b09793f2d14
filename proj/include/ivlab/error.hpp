#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ivlab {

/// Failure categories raised by the library. Every operation that can fail
/// throws ivlab::Error carrying one of these codes.
enum class ErrorCode {
    NonZeroMean,
    GridMismatch,
    BadExponent,
    CflViolation,
    TimeRangeExceeded,
    BadParams,
    StochasticFlowNotAllowed,
    DeterministicFlowNotAllowed,
    MismatchedEnsembles,
    BadEps,
    BadAlpha,
    InsufficientPoints,
    NonPositiveError,
    BadBeta,
    BadRadii,
    SupportViolation,
    ShapeMismatch,
    HistoryGap,
    BadCutoff,
    UnknownDatum,
    ConfigError,
    IoError,
    FormatError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ivlab
