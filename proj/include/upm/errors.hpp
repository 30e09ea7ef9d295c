#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace upm {

// Base class for all domain errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnalignedAddress : Error {
    using Error::Error;
};
struct OverlappingMapping : Error {
    using Error::Error;
};
struct UnmappedRange : Error {
    using Error::Error;
};
struct NotPresent : Error {
    using Error::Error;
};
struct UnknownProcess : Error {
    using Error::Error;
};
struct TableBudgetExceeded : Error {
    using Error::Error;
};

// Raised by merge_pages when the pre-merge page-descriptor check fails;
// the per-page advise loop re-runs for that page.
struct MergeAborted : Error {
    using Error::Error;
};

struct PageSizeMismatch : Error {
    using Error::Error;
};
struct BadSegmentSize : Error {
    using Error::Error;
};
struct NoSamples : Error {
    using Error::Error;
};
struct InvalidConfig : Error {
    using Error::Error;
};
struct BudgetExceeded : Error {
    using Error::Error;
};

// Internal consistency failure; the CLI maps this to exit code 2.
struct InvariantViolation : Error {
    using Error::Error;
};

// Snapshot file parsing errors carry the byte offset of the fault.
struct SnapshotFormatError : Error {
    SnapshotFormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset(offset) {}
    std::uint64_t offset;
};

struct BadMagic : SnapshotFormatError {
    using SnapshotFormatError::SnapshotFormatError;
};
struct TruncatedFile : SnapshotFormatError {
    using SnapshotFormatError::SnapshotFormatError;
};
struct DuplicateVaddr : SnapshotFormatError {
    using SnapshotFormatError::SnapshotFormatError;
};
struct BadPageSize : SnapshotFormatError {
    using SnapshotFormatError::SnapshotFormatError;
};

}  // namespace upm
