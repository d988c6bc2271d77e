#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nnfdet {

enum class ErrorCode {
    IoError,
    FormatError,
    InvalidArgument,
    OutOfBounds,
    InsufficientData,
    ParseError,
    DegeneratePlane,
    ImageTooSmall,
    NoGroundTruth,
    EmptyInput,
    ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code the
/// CLI can print in machine-parsable form.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace nnfdet
