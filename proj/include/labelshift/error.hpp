#pragma once

#include <stdexcept>
#include <string>

namespace labelshift {

// Every recoverable failure carries one of these codes so callers can
// branch on the condition instead of parsing message text.
enum class ErrorCode {
    AllZero,
    NegativeWeight,
    DimensionMismatch,
    InvalidDistribution,
    InvalidParameter,
    ZeroPrior,
    SingularSystem,
    EmptyLabels,
    OutOfRangeLabel,
    ZeroClassProbability,
    EmptyTrain,
    TooSmall,
    AbsentClass,
    SingleClass,
    EmptyMatrix,
    RaggedTable,
    ParseError,
    MissingLabelColumn,
    EmptyFeatures,
    InsufficientData,
    UnknownAxis,
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace labelshift
