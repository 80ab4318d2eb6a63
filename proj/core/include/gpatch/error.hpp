#pragma once

#include <stdexcept>
#include <string>

namespace gpatch {

enum class ErrorCode {
    DimensionTooLarge,
    InvalidBand,
    DegenerateBound,
    EmptyIndexSet,
    NoConvergence,
    ShapeMismatch,
    EmptyMask,
    ParseError,
    ManifestMismatch,
    InfeasibleSpec,
    InvalidArgument,
};

/// Library-wide exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char *error_code_name(ErrorCode c) {
    switch (c) {
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::DegenerateBound: return "DegenerateBound";
    case ErrorCode::EmptyIndexSet: return "EmptyIndexSet";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace gpatch
