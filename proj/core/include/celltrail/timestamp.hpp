#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace celltrail {

/// UTC instant with one-second resolution. Text form is ISO-8601
/// "YYYY-MM-DDTHH:MM:SSZ".
struct Timestamp {
    std::int64_t seconds = 0;  // since 1970-01-01T00:00:00Z

    auto operator<=>(const Timestamp&) const = default;
};

std::string render_timestamp(Timestamp t);

/// Parses the exact "YYYY-MM-DDTHH:MM:SSZ" form. Returns nullopt on any
/// deviation (missing Z, out-of-range field, trailing garbage).
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// Current wall-clock time, truncated to seconds.
Timestamp now_utc();

}  // namespace celltrail
