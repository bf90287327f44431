#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "webforge/archive.hpp"
#include "webforge/genclient.hpp"
#include "webforge/shaper.hpp"

namespace webforge {

enum class Mode { original, generated_client, generated_server, hybrid };

std::string_view to_string(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view name) noexcept;

struct ServeMode {
  Mode mode = Mode::original;
  std::set<std::string> hybrid_urls;  // only consulted in hybrid mode
};

enum class MissPolicy { not_found_404, gateway_502 };
std::optional<MissPolicy> parse_miss_policy(std::string_view name) noexcept;

enum class ProxyRole { content, image };

/// Prompt to generate `image` from under `mode`, or nullopt when the archived
/// original must be served. generated_client reads client_prompt,
/// generated_server reads server_prompt, hybrid reads server_prompt then
/// client_prompt for URLs in hybrid_urls. Blank prompts count as missing.
std::optional<std::string> substitution_prompt(const ServeMode& mode, const ImageAnnotation& image);

inline constexpr std::string_view kGeneratedHeader = "X-WebForge-Generated";
inline constexpr std::string_view kErrorHeader = "X-WebForge-Error";

struct ProxyRequest {
  std::string method = "GET";
  std::string url;  // absolute
};

struct ProxyResponse {
  int status = 200;
  std::vector<Header> headers;  // includes Content-Type
  std::string body;
  bool generated = false;

  const std::string* header(std::string_view name) const;
};

struct ProxyContext {
  const PageArchive* archive = nullptr;
  ServeMode serve_mode;
  MissPolicy miss_policy = MissPolicy::not_found_404;
  ImageGenerator* generator = nullptr;
  GenerationConfig generation{.seed = 0};
  std::stop_token stop;
};

/// Answers one request from the archive. Substitution only happens on the
/// image proxy; the content proxy always replays archived bytes.
ProxyResponse serve_request(const ProxyContext& context, ProxyRole role, const ProxyRequest& request);

struct ProxyPairConfig {
  std::string host = "127.0.0.1";
  int content_port = 0;  // 0 picks an ephemeral port
  int image_port = 0;
  PageArchive archive;
  ServeMode serve_mode;
  std::optional<ConnectivityProfile> shaping;  // content proxy only
  MissPolicy miss_policy = MissPolicy::not_found_404;
  GenerationConfig generation{.seed = 0};
};

class ProxyPair {
 public:
  /// Throws Error{PortInUse} when a listener cannot bind and
  /// Error{InvalidArgument} when both ports are the same nonzero value.
  static std::unique_ptr<ProxyPair> start(ProxyPairConfig config, std::shared_ptr<ImageGenerator> generator);
  ~ProxyPair();
  ProxyPair(const ProxyPair&) = delete;
  ProxyPair& operator=(const ProxyPair&) = delete;

  int content_port() const noexcept;
  int image_port() const noexcept;
  std::string pac() const;

  /// Stops accepting, waits up to `drain` for in-flight requests, then aborts
  /// pending generations and closes everything.
  void shutdown(std::chrono::milliseconds drain = std::chrono::seconds(5));

 private:
  struct Impl;
  explicit ProxyPair(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace webforge
