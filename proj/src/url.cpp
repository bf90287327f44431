#include "webforge/url.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

namespace webforge {
namespace {

bool is_scheme_char(char c, bool first) {
  if (std::isalpha(static_cast<unsigned char>(c))) return true;
  if (first) return false;
  return std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string remove_dot_segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const bool absolute = !path.empty() && path.front() == '/';
  bool trailing_slash = false;
  while (i <= path.size()) {
    const std::size_t j = std::min(path.find('/', i), path.size());
    std::string_view seg = path.substr(i, j - i);
    const bool last = j >= path.size();
    if (seg == ".") {
      trailing_slash = last;
    } else if (seg == "..") {
      if (!out.empty()) out.pop_back();
      trailing_slash = last;
    } else if (!(seg.empty() && i == 0 && absolute)) {
      out.emplace_back(seg);
      trailing_slash = false;
    }
    i = j + 1;
  }
  std::string result = absolute ? "/" : "";
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (k) result += '/';
    result += out[k];
  }
  if (trailing_slash && (result.empty() || result.back() != '/')) result += '/';
  return result;
}

std::string merge_paths(const UrlParts& base, std::string_view ref_path) {
  if (!base.authority.empty() && base.path.empty()) return "/" + std::string(ref_path);
  const auto slash = base.path.rfind('/');
  if (slash == std::string::npos) return std::string(ref_path);
  return base.path.substr(0, slash + 1) + std::string(ref_path);
}

}  // namespace

std::optional<UrlParts> parse_url(std::string_view url) {
  UrlParts p;
  std::string_view rest = url;
  const auto colon = rest.find(':');
  if (colon != std::string_view::npos && colon > 0) {
    bool ok = true;
    for (std::size_t i = 0; i < colon; ++i) ok = ok && is_scheme_char(rest[i], i == 0);
    const auto first_delim = rest.find_first_of("/?#");
    if (ok && (first_delim == std::string_view::npos || first_delim > colon)) {
      p.scheme = to_lower(rest.substr(0, colon));
      rest.remove_prefix(colon + 1);
    }
  }
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    p.fragment = std::string(rest.substr(hash + 1));
    p.has_fragment = true;
    rest = rest.substr(0, hash);
  }
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    p.query = std::string(rest.substr(q + 1));
    p.has_query = true;
    rest = rest.substr(0, q);
  }
  if (rest.starts_with("//")) {
    rest.remove_prefix(2);
    const auto slash = rest.find('/');
    p.authority = to_lower(rest.substr(0, slash));
    rest = slash == std::string_view::npos ? std::string_view{} : rest.substr(slash);
    if (p.authority.empty() && !p.scheme.empty() && p.scheme != "file") return std::nullopt;
  }
  p.path = std::string(rest);
  return p;
}

std::string compose_url(const UrlParts& p) {
  std::string out;
  if (!p.scheme.empty()) out += p.scheme + ":";
  if (!p.authority.empty() || p.scheme == "http" || p.scheme == "https") out += "//" + p.authority;
  out += p.path;
  if (p.has_query) out += "?" + p.query;
  if (p.has_fragment) out += "#" + p.fragment;
  return out;
}

std::optional<std::string> resolve_url(std::string_view base, std::string_view reference) {
  auto b = parse_url(base);
  if (!b || b->scheme.empty()) return std::nullopt;
  auto r = parse_url(reference);
  if (!r) return std::nullopt;
  UrlParts t;
  if (!r->scheme.empty()) {
    t = *r;
    t.path = remove_dot_segments(r->path);
  } else {
    t.scheme = b->scheme;
    const bool ref_has_authority = reference.starts_with("//");
    if (ref_has_authority) {
      t.authority = r->authority;
      t.path = remove_dot_segments(r->path);
      t.query = r->query;
      t.has_query = r->has_query;
    } else {
      t.authority = b->authority;
      if (r->path.empty()) {
        t.path = b->path;
        t.query = r->has_query ? r->query : b->query;
        t.has_query = r->has_query || b->has_query;
      } else {
        t.path = r->path.front() == '/' ? remove_dot_segments(r->path)
                                        : remove_dot_segments(merge_paths(*b, r->path));
        t.query = r->query;
        t.has_query = r->has_query;
      }
    }
    t.fragment = r->fragment;
    t.has_fragment = r->has_fragment;
  }
  if ((t.scheme == "http" || t.scheme == "https") && t.path.empty()) t.path = "/";
  return compose_url(t);
}

std::string url_path(std::string_view url) {
  auto p = parse_url(url);
  if (!p) return "/";
  return p->path.empty() ? "/" : p->path;
}

std::string downgrade_to_http(std::string_view url) {
  if (url.size() >= 8 && to_lower(url.substr(0, 8)) == "https://") {
    return "http://" + std::string(url.substr(8));
  }
  return std::string(url);
}

}  // namespace webforge
