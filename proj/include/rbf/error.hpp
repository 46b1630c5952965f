#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rbf {

/// Failure categories shared by every module. The CLI maps these onto exit
/// statuses, and the remote repository protocol maps the data-mover subset
/// onto wire status bytes.
enum class ErrorCode {
    InvalidArgument,
    InvalidTopic,
    PayloadTooLarge,
    StorageFailure,
    NotFound,
    UnknownTopic,
    InvalidRange,
    UnknownFile,
    UnknownVersion,
    ChecksumMismatch,
    Malformed,
    Timeout,
    TypeMismatch,
    EmptySlot,
    InvalidTransition,
    NoActiveAllocation,
    InvalidConfig,
    UnconfiguredModelType,
    NoDeploys,
    EmptyCurve,
    EmptySelection,
};

/// Stable kebab-case name, used in CLI diagnostics ("unknown-file").
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace rbf
