#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace webforge {

std::string base64_encode(std::string_view bytes);
/// Accepts standard and URL-safe alphabets; ignores whitespace. nullopt on bad input.
std::optional<std::string> base64_decode(std::string_view text);

}  // namespace webforge
