#include "rbf/error.hpp"

namespace rbf {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::InvalidTopic: return "invalid-topic";
    case ErrorCode::PayloadTooLarge: return "payload-too-large";
    case ErrorCode::StorageFailure: return "storage-failure";
    case ErrorCode::NotFound: return "not-found";
    case ErrorCode::UnknownTopic: return "unknown-topic";
    case ErrorCode::InvalidRange: return "invalid-range";
    case ErrorCode::UnknownFile: return "unknown-file";
    case ErrorCode::UnknownVersion: return "unknown-version";
    case ErrorCode::ChecksumMismatch: return "checksum-mismatch";
    case ErrorCode::Malformed: return "malformed";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::TypeMismatch: return "type-mismatch";
    case ErrorCode::EmptySlot: return "empty-slot";
    case ErrorCode::InvalidTransition: return "invalid-transition";
    case ErrorCode::NoActiveAllocation: return "no-active-allocation";
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::UnconfiguredModelType: return "unconfigured-model-type";
    case ErrorCode::NoDeploys: return "no-deploys";
    case ErrorCode::EmptyCurve: return "empty-curve";
    case ErrorCode::EmptySelection: return "empty-selection";
    }
    return "unknown-error";
}

} // namespace rbf
