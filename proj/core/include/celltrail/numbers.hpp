#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace celltrail {

/// Canonical text form of a finite double: the shortest decimal string that
/// parses back to the identical bit pattern ("0.5", "-0", "1e+100", ...).
std::string render_number(double value);

/// Strict parse of a full decimal/scientific literal; the whole input must be
/// consumed. Returns nullopt for empty input, trailing garbage, inf/nan.
std::optional<double> parse_number(std::string_view text);

/// Bit-level equality: distinguishes 0.0 from -0.0. NaN never compares equal
/// to anything here because stored numbers are invariant-checked finite.
bool bits_equal(double a, double b);

}  // namespace celltrail
