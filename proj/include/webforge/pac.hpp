#pragma once

#include <string>
#include <string_view>

namespace webforge::pac {

/// Image-extension rule shared by the emitted script and the native check.
inline constexpr std::string_view kImagePattern = R"(\.(png|jpe?g|gif|webp|svg|ico|avif)(\?|$))";

/// The byte-exact script template; `@IMAGE_PROXY@` and `@CONTENT_PROXY@` are
/// replaced by host:port strings.
extern const std::string_view kTemplate;

std::string emit_pac(std::string_view content_host_port, std::string_view image_host_port);

/// Native equivalent of the script's routing decision: true when the URL path
/// (scheme, authority, query and fragment removed) matches kImagePattern,
/// case-insensitively.
bool routes_to_image_proxy(std::string_view url);

}  // namespace webforge::pac
