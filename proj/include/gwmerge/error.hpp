#pragma once

#include <stdexcept>
#include <string>

namespace gwmerge {

enum class ErrorKind {
    // container / parsing
    MalformedHeader,
    MalformedManifest,
    DimensionMismatch,
    ShapeDataMismatch,
    DuplicateTensorName,
    UntaggedTensor,
    NonFiniteValue,
    IoFailure,
    InvariantViolation,
    // solver
    NumericalUnderflow,
    // planner
    InvalidPartition,
    TargetOutOfRange,
    TooManyTasks,
    // merger
    ShapeMismatch,
    EmptyInput,
    NegativeFisher,
    LambdaCountMismatch,
    InvalidDensity,
    MissingSnapshot,
    MethodRequiresBase,
    // metrics
    LengthMismatch,
    NonPositiveWeight,
    // similarity
    PairFailure,
    // cli / config
    ConfigError,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::MalformedHeader: return "MalformedHeader";
        case ErrorKind::MalformedManifest: return "MalformedManifest";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ShapeDataMismatch: return "ShapeDataMismatch";
        case ErrorKind::DuplicateTensorName: return "DuplicateTensorName";
        case ErrorKind::UntaggedTensor: return "UntaggedTensor";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::InvariantViolation: return "InvariantViolation";
        case ErrorKind::NumericalUnderflow: return "NumericalUnderflow";
        case ErrorKind::InvalidPartition: return "InvalidPartition";
        case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
        case ErrorKind::TooManyTasks: return "TooManyTasks";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::NegativeFisher: return "NegativeFisher";
        case ErrorKind::LambdaCountMismatch: return "LambdaCountMismatch";
        case ErrorKind::InvalidDensity: return "InvalidDensity";
        case ErrorKind::MissingSnapshot: return "MissingSnapshot";
        case ErrorKind::MethodRequiresBase: return "MethodRequiresBase";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::NonPositiveWeight: return "NonPositiveWeight";
        case ErrorKind::PairFailure: return "PairFailure";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "UnknownError";
}

/// Library-wide exception. `kind()` identifies the failure class so callers
/// (and tests) can match on it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace gwmerge
