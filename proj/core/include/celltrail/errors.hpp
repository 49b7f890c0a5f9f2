#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace celltrail {

enum class ContainerErrc {
    NotZip,
    MissingEntry,
    CorruptEntry,
    MalformedXml,
    InvalidRecord,
    InvariantViolation,
    NoChange,
    TimestampRegression,
    OutOfBounds,
    RegionOverlap,
    ReadOnly,
    UnknownChangeId,
    ChainBroken,
    UnknownSheet,
};

/// Errors raised by the document container: archive I/O, record validation,
/// and the tracked-mutation API.
class ContainerError : public std::runtime_error {
public:
    ContainerError(ContainerErrc code, std::string message, std::string entry = {},
                   int line = 0, std::int64_t record_id = 0)
        : std::runtime_error(std::move(message)),
          code_(code),
          entry_(std::move(entry)),
          line_(line),
          record_id_(record_id) {}

    ContainerErrc code() const { return code_; }
    const std::string& entry() const { return entry_; }  // archive entry name, if any
    int line() const { return line_; }                   // 1-based XML line, if any
    std::int64_t record_id() const { return record_id_; }

private:
    ContainerErrc code_;
    std::string entry_;
    int line_;
    std::int64_t record_id_;
};

}  // namespace celltrail
