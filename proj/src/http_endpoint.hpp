#pragma once

#include <httplib.h>

#include <chrono>
#include <string>
#include <string_view>

#include "webforge/error.hpp"
#include "webforge/url.hpp"

namespace webforge::detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // at least "/"
};

inline Endpoint split_endpoint(std::string_view url, ErrorKind on_error) {
  auto parts = parse_url(url);
  if (!parts || parts->scheme != "http" || parts->authority.empty()) {
    throw Error(on_error, "endpoint must be an http:// URL: " + std::string(url));
  }
  Endpoint e{parts->scheme + "://" + parts->authority, parts->path.empty() ? "/" : parts->path};
  if (parts->has_query) e.path += "?" + parts->query;
  return e;
}

inline httplib::Client make_client(const Endpoint& ep, std::chrono::milliseconds timeout) {
  httplib::Client cli(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}

}  // namespace webforge::detail
