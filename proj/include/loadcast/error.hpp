#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loadcast {

enum class ErrorKind {
    IoFailure,
    EmptyFile,
    MalformedRow,
    NonUniformSampling,
    NegativeValue,
    NonFiniteInput,
    IncompatibleResolution,
    MisalignedSeries,
    EmptyList,
    SeriesTooShort,
    InvalidArgument,
    EmptyContext,
    TokenOutOfRange,
    CodecMismatch,
    IndivisibleLength,
    IndivisibleContext,
    TooFewSamples,
    RaggedPaths,
    HorizonMismatch,
    FactorizationFailure,
    NonConvergence,
    InsufficientContext,
    NotFitted,
    LengthMismatch,
    EmptyVector,
    GammaOutOfRange,
    InconsistentFields,
    ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::NonUniformSampling: return "NonUniformSampling";
    case ErrorKind::NegativeValue: return "NegativeValue";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::IncompatibleResolution: return "IncompatibleResolution";
    case ErrorKind::MisalignedSeries: return "MisalignedSeries";
    case ErrorKind::EmptyList: return "EmptyList";
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyContext: return "EmptyContext";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::CodecMismatch: return "CodecMismatch";
    case ErrorKind::IndivisibleLength: return "IndivisibleLength";
    case ErrorKind::IndivisibleContext: return "IndivisibleContext";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::RaggedPaths: return "RaggedPaths";
    case ErrorKind::HorizonMismatch: return "HorizonMismatch";
    case ErrorKind::FactorizationFailure: return "FactorizationFailure";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::InsufficientContext: return "InsufficientContext";
    case ErrorKind::NotFitted: return "NotFitted";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyVector: return "EmptyVector";
    case ErrorKind::GammaOutOfRange: return "GammaOutOfRange";
    case ErrorKind::InconsistentFields: return "InconsistentFields";
    case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure raised by the library. The kind is stable and meant for
/// programmatic dispatch; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

    /// Same kind, with `context` prepended to the message.
    Error with_context(const std::string& context) const { return Error(kind_, context + ": " + message_); }

private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace loadcast
