#include "webforge/pac.hpp"

#include <regex>

#include "webforge/url.hpp"

namespace webforge::pac {

const std::string_view kTemplate =
    R"PAC(// Proxy auto-config emitted by webforge. Image URLs go to the image proxy,
// everything else to the content proxy.
function FindProxyForURL(url, host) {
  var path = url.replace(/^[a-zA-Z][a-zA-Z0-9+.-]*:\/\/[^\/?#]*/, "").replace(/[?#].*$/, "");
  if (/\.(png|jpe?g|gif|webp|svg|ico|avif)(\?|$)/i.test(path)) {
    return "PROXY @IMAGE_PROXY@";
  }
  return "PROXY @CONTENT_PROXY@";
}
)PAC";

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

std::string emit_pac(std::string_view content_host_port, std::string_view image_host_port) {
  std::string out(kTemplate);
  replace_all(out, "@IMAGE_PROXY@", image_host_port);
  replace_all(out, "@CONTENT_PROXY@", content_host_port);
  return out;
}

bool routes_to_image_proxy(std::string_view url) {
  static const std::regex pattern(std::string(kImagePattern), std::regex::ECMAScript | std::regex::icase);
  std::string path;
  if (auto parts = parse_url(url)) {
    path = parts->path;
  } else {
    path = std::string(url);
  }
  return std::regex_search(path, pattern);
}

}  // namespace webforge::pac
