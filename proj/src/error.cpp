#include "crux/error.hpp"

namespace crux {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoModuleFound: return "NoModuleFound";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedSyntax: return "UnsupportedSyntax";
    case ErrorCode::MissingDiagram: return "MissingDiagram";
    case ErrorCode::UnsupportedCategory: return "UnsupportedCategory";
    case ErrorCode::ToolchainMissing: return "ToolchainMissing";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingRefLogprobs: return "MissingRefLogprobs";
    case ErrorCode::ProviderUnreachable: return "ProviderUnreachable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::TruncatedResponse: return "TruncatedResponse";
    case ErrorCode::LogprobsUnsupported: return "LogprobsUnsupported";
    case ErrorCode::TokenizationMismatch: return "TokenizationMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

} // namespace crux
