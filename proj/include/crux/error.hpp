#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crux {

enum class ErrorCode {
    InvalidArgument,
    // verilog-interface
    NoModuleFound,
    MalformedHeader,
    UnsupportedSyntax,
    // corpus-pipeline
    MissingDiagram,
    UnsupportedCategory,
    // verification-harness
    ToolchainMissing,
    DomainError,
    EmptyInput,
    // reward-engine / grpo-core
    EmptySequence,
    GroupTooSmall,
    LengthMismatch,
    MissingRefLogprobs,
    // model-gateway
    ProviderUnreachable,
    RateLimited,
    TruncatedResponse,
    LogprobsUnsupported,
    TokenizationMismatch,
    // io
    IoError,
    ParseError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace crux
