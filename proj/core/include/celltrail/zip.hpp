#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace celltrail {

/// Minimal zip support for the container format: stored and deflate methods,
/// no zip64, no encryption. The writer is deterministic — fixed entry
/// metadata, so identical input bytes always yield identical archives.
struct ZipEntry {
    std::string name;
    std::string data;
};

/// Builds an archive holding `entries` in the given order. Each entry is
/// deflated; if deflate does not shrink it, it is stored.
std::string zip_pack(const std::vector<ZipEntry>& entries);

/// Extracts all entries in central-directory order. Throws
/// ContainerError{NotZip} when the bytes are not an archive and
/// ContainerError{CorruptEntry} on CRC or decompression failure.
std::vector<ZipEntry> zip_unpack(std::string_view bytes);

}  // namespace celltrail
