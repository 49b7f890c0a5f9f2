#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace celltrail {

std::string base64_encode(std::string_view bytes);
/// Strict decode (standard alphabet, correct padding); nullopt on any
/// malformed input.
std::optional<std::string> base64_decode(std::string_view text);

}  // namespace celltrail
