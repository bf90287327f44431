#include "webforge/proxy.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <condition_variable>
#include <thread>

#include "webforge/error.hpp"
#include "webforge/pac.hpp"
#include "webforge/url.hpp"

namespace webforge {

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::original: return "original";
    case Mode::generated_client: return "generated_client";
    case Mode::generated_server: return "generated_server";
    case Mode::hybrid: return "hybrid";
  }
  return "original";
}

std::optional<Mode> parse_mode(std::string_view name) noexcept {
  for (Mode m : {Mode::original, Mode::generated_client, Mode::generated_server, Mode::hybrid}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

std::optional<MissPolicy> parse_miss_policy(std::string_view name) noexcept {
  if (name == "404" || name == "not_found_404") return MissPolicy::not_found_404;
  if (name == "502" || name == "gateway_502") return MissPolicy::gateway_502;
  return std::nullopt;
}

namespace {

bool blank(const std::optional<std::string>& s) {
  return !s || std::all_of(s->begin(), s->end(), [](unsigned char c) { return std::isspace(c); });
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

// Headers the replay must not copy: connection management, and framing that
// no longer matches the decoded body we serve.
bool dropped_header(std::string_view name) {
  static constexpr std::string_view kDropped[] = {"connection",        "keep-alive",       "proxy-connection",
                                                  "transfer-encoding", "te",               "trailer",
                                                  "upgrade",           "content-length",   "content-encoding",
                                                  "content-type",      "proxy-authenticate", "proxy-authorization"};
  return std::any_of(std::begin(kDropped), std::end(kDropped), [&](std::string_view d) { return iequals(d, name); });
}

ProxyResponse text_response(int status, std::string body, std::optional<std::string> error = std::nullopt) {
  ProxyResponse r;
  r.status = status;
  r.headers.push_back({"Content-Type", "text/plain; charset=utf-8"});
  if (error) r.headers.push_back({std::string(kErrorHeader), *error});
  r.body = std::move(body);
  return r;
}

const ArchiveEntry* find_entry(const PageArchive& archive, const ProxyRequest& request) {
  const std::string method = request.method == "HEAD" ? "GET" : request.method;
  if (const auto* e = archive.lookup(request.url, method)) return e;
  // Archives are usually recorded over https and replayed over plain http.
  if (request.url.starts_with("http://")) {
    if (const auto* e = archive.lookup("https://" + request.url.substr(7), method)) return e;
  }
  return nullptr;
}

}  // namespace

const std::string* ProxyResponse::header(std::string_view name) const {
  for (const auto& h : headers) {
    if (iequals(h.name, name)) return &h.value;
  }
  return nullptr;
}

std::optional<std::string> substitution_prompt(const ServeMode& mode, const ImageAnnotation& image) {
  switch (mode.mode) {
    case Mode::original:
      return std::nullopt;
    case Mode::generated_client:
      if (blank(image.client_prompt)) return std::nullopt;
      return image.client_prompt;
    case Mode::generated_server:
      if (blank(image.server_prompt)) return std::nullopt;
      return image.server_prompt;
    case Mode::hybrid:
      if (!mode.hybrid_urls.contains(image.url)) return std::nullopt;
      if (!blank(image.server_prompt)) return image.server_prompt;
      if (!blank(image.client_prompt)) return image.client_prompt;
      return std::nullopt;
  }
  return std::nullopt;
}

ProxyResponse serve_request(const ProxyContext& ctx, ProxyRole role, const ProxyRequest& request) {
  if (!ctx.archive) throw Error(ErrorKind::InvalidArgument, "proxy context without an archive");
  const ArchiveEntry* entry = find_entry(*ctx.archive, request);
  if (!entry) {
    if (ctx.miss_policy == MissPolicy::gateway_502) return text_response(502, "not in archive: " + request.url + "\n");
    return text_response(404, "not in archive: " + request.url + "\n");
  }

  if (role == ProxyRole::image && entry->is_image) {
    if (const auto* image = ctx.archive->find_image(entry->url)) {
      if (auto prompt = substitution_prompt(ctx.serve_mode, *image)) {
        if (!ctx.generator) return text_response(502, "no image generator configured\n", "no generator");
        GenerationConfig config = ctx.generation;
        config.width = backend_side(image->width);
        config.height = backend_side(image->height);
        try {
          auto out = ctx.generator->generate(*prompt, config, ctx.stop);
          ProxyResponse r;
          r.status = 200;
          r.headers.push_back({"Content-Type", "image/png"});
          r.headers.push_back({std::string(kGeneratedHeader), "1"});
          r.body = std::move(out.png);
          r.generated = true;
          return r;
        } catch (const Error& e) {
          return text_response(502, std::string(e.what()) + "\n", std::string(to_string(e.kind())));
        }
      }
    }
  }

  ProxyResponse r;
  r.status = entry->status;
  r.headers.push_back({"Content-Type", entry->content_type.empty() ? "application/octet-stream" : entry->content_type});
  for (const auto& h : entry->headers) {
    if (!dropped_header(h.name)) r.headers.push_back(h);
  }
  if (const auto* body = ctx.archive->body(*entry)) r.body = *body;
  return r;
}

struct ProxyPair::Impl {
  ProxyPairConfig config;
  std::shared_ptr<ImageGenerator> generator;
  std::stop_source stop_source;
  ProxyContext context;

  httplib::Server content_server;
  httplib::Server image_server;
  std::thread content_thread;
  std::thread image_thread;
  std::unique_ptr<ShapingRelay> relay;
  int content_port = 0;
  int image_port = 0;

  std::mutex mu;
  std::condition_variable idle;
  int in_flight = 0;
  bool shut_down = false;

  void install(httplib::Server& server, ProxyRole role) {
    server.set_keep_alive_timeout(1);
    // httplib's default also sets SO_REUSEPORT, which would let a second
    // proxy silently share an occupied port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    auto handler = [this, role](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu);
        ++in_flight;
      }
      ProxyRequest pr;
      pr.method = req.method;
      if (req.target.starts_with("http://") || req.target.starts_with("https://")) {
        pr.url = req.target;
      } else {
        pr.url = "http://" + req.get_header_value("Host") + req.target;
      }
      ProxyResponse out;
      try {
        out = serve_request(context, role, pr);
      } catch (const std::exception& e) {
        out = text_response(500, std::string(e.what()) + "\n");
      }
      res.status = out.status;
      std::string content_type = "application/octet-stream";
      for (auto& h : out.headers) {
        if (iequals(h.name, "Content-Type")) {
          content_type = h.value;
        } else {
          res.set_header(h.name, h.value);
        }
      }
      res.set_content(std::move(out.body), content_type);
      {
        std::lock_guard lock(mu);
        --in_flight;
      }
      idle.notify_all();
    };
    server.Get(".*", handler);
    server.Post(".*", handler);
    server.Put(".*", handler);
    server.Delete(".*", handler);
    server.Options(".*", handler);
    server.Patch(".*", handler);
  }

  static int bind(httplib::Server& server, const std::string& host, int port) {
    if (port == 0) {
      const int bound = server.bind_to_any_port(host);
      if (bound < 0) throw Error(ErrorKind::PortInUse, "cannot bind " + host);
      return bound;
    }
    if (!server.bind_to_port(host, port)) {
      throw Error(ErrorKind::PortInUse, host + ":" + std::to_string(port) + " is already in use");
    }
    return port;
  }
};

ProxyPair::ProxyPair(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

std::unique_ptr<ProxyPair> ProxyPair::start(ProxyPairConfig config, std::shared_ptr<ImageGenerator> generator) {
  if (config.content_port != 0 && config.content_port == config.image_port) {
    throw Error(ErrorKind::InvalidArgument, "content and image ports must differ");
  }
  if (config.shaping) config.shaping->validate();
  validate(config.archive);

  auto impl = std::make_unique<Impl>();
  impl->config = std::move(config);
  impl->generator = std::move(generator);
  impl->context.archive = &impl->config.archive;
  impl->context.serve_mode = impl->config.serve_mode;
  impl->context.miss_policy = impl->config.miss_policy;
  impl->context.generator = impl->generator.get();
  impl->context.generation = impl->config.generation;
  impl->context.stop = impl->stop_source.get_token();
  impl->install(impl->content_server, ProxyRole::content);
  impl->install(impl->image_server, ProxyRole::image);

  const auto& cfg = impl->config;
  impl->image_port = Impl::bind(impl->image_server, cfg.host, cfg.image_port);
  try {
    if (cfg.shaping) {
      const int internal = Impl::bind(impl->content_server, "127.0.0.1", 0);
      impl->relay = std::make_unique<ShapingRelay>(cfg.host, cfg.content_port, internal, *cfg.shaping);
      impl->content_port = impl->relay->port();
    } else {
      impl->content_port = Impl::bind(impl->content_server, cfg.host, cfg.content_port);
    }
  } catch (...) {
    impl->image_server.stop();
    impl->content_server.stop();
    throw;
  }
  impl->image_thread = std::thread([p = impl.get()] { p->image_server.listen_after_bind(); });
  impl->content_thread = std::thread([p = impl.get()] { p->content_server.listen_after_bind(); });
  impl->image_server.wait_until_ready();
  impl->content_server.wait_until_ready();
  return std::unique_ptr<ProxyPair>(new ProxyPair(std::move(impl)));
}

ProxyPair::~ProxyPair() { shutdown(); }

int ProxyPair::content_port() const noexcept { return impl_->content_port; }
int ProxyPair::image_port() const noexcept { return impl_->image_port; }

std::string ProxyPair::pac() const {
  const std::string host = impl_->config.host == "0.0.0.0" ? "127.0.0.1" : impl_->config.host;
  return pac::emit_pac(host + ":" + std::to_string(impl_->content_port), host + ":" + std::to_string(impl_->image_port));
}

void ProxyPair::shutdown(std::chrono::milliseconds drain) {
  Impl& p = *impl_;
  {
    std::lock_guard lock(p.mu);
    if (p.shut_down) return;
    p.shut_down = true;
  }
  p.image_server.stop();
  p.content_server.stop();
  {
    std::unique_lock lock(p.mu);
    if (!p.idle.wait_for(lock, drain, [&] { return p.in_flight == 0; })) {
      lock.unlock();
      p.stop_source.request_stop();
    }
  }
  if (p.image_thread.joinable()) p.image_thread.join();
  if (p.content_thread.joinable()) p.content_thread.join();
  if (p.relay) p.relay->stop();
}

}  // namespace webforge
