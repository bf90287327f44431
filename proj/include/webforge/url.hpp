#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace webforge {

struct UrlParts {
  std::string scheme;     // lowercase, without ':'
  std::string authority;  // host[:port], empty for scheme-less input
  std::string path;       // begins with '/' when authority is present
  std::string query;      // without '?'
  std::string fragment;   // without '#'
  bool has_query = false;
  bool has_fragment = false;
};

std::optional<UrlParts> parse_url(std::string_view url);
std::string compose_url(const UrlParts& parts);

/// Resolves `reference` against the absolute URL `base` (RFC 3986 section 5).
/// Returns nullopt if `base` is not absolute.
std::optional<std::string> resolve_url(std::string_view base, std::string_view reference);

/// Path component only, no query or fragment. "/" when the URL has an empty path.
std::string url_path(std::string_view url);

/// Rewrites https:// to http:// for plain-HTTP replay.
std::string downgrade_to_http(std::string_view url);

}  // namespace webforge
