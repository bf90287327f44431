#include <httplib.h>

#include <fstream>
#include <sstream>

#include "webforge/error.hpp"
#include "webforge/image.hpp"
#include "webforge/study.hpp"

namespace webforge {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownStudy:
    case ErrorKind::UnknownTask: return 404;
    case ErrorKind::DuplicateSubmission: return 409;
    case ErrorKind::FormMismatch: return 422;
    case ErrorKind::SchemaViolation:
    case ErrorKind::InvalidArgument: return 400;
    case ErrorKind::Unauthorized: return 401;
    default: return 500;
  }
}

std::string media_type(const std::filesystem::path& p, std::string_view bytes) {
  if (auto info = probe_image(bytes)) return std::string(mime_type(info->format));
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  if (ext == ".json") return "application/json";
  return "application/octet-stream";
}

}  // namespace

struct StudyServer::Impl {
  Study& study;
  StudyServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  bool stopped = false;

  Impl(Study& s, StudyServerOptions o) : study(s), options(std::move(o)) {}

  template <typename Fn>
  void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  }

  void routes() {
    server.Get("/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto type = TaskType::parse(req.has_param("type") ? req.get_param_value("type") : "images");
        if (!type) throw Error(ErrorKind::InvalidArgument, "unknown type " + req.get_param_value("type"));
        const std::string pid = req.get_param_value("pid");
        if (pid.empty()) throw Error(ErrorKind::InvalidArgument, "pid is required");
        const auto a = study.next_task(*type, pid);
        if (a.task) {
          send_json(res, 200, {{"task", task_json(*a.task)}, {"completion_code", nullptr}});
        } else {
          send_json(res, 200, {{"task", nullptr}, {"completion_code", *a.completion_code}});
        }
      });
    });

    server.Post("/scores", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (req.get_header_value("Authorization") != "Bearer " + study_secret()) {
          throw Error(ErrorKind::Unauthorized, "missing or wrong bearer token");
        }
        const auto doc = json::parse(req.body, nullptr, false);
        if (doc.is_discarded()) throw Error(ErrorKind::SchemaViolation, "$: body is not valid JSON");
        const auto out = study.submit(parse_record(doc));
        send_json(res, 201, {{"accepted", true}, {"sequence", out.sequence}, {"over_quota", out.over_quota}});
      });
    });

    server.Get("/results", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto type = TaskType::parse(req.has_param("type") ? req.get_param_value("type") : "images");
        if (!type) throw Error(ErrorKind::InvalidArgument, "unknown type " + req.get_param_value("type"));
        send_json(res, 200, results_json(study.results(*type)));
      });
    });

    server.Get(R"(/media/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (options.media_root.empty()) throw Error(ErrorKind::UnknownTask, "no media root configured");
        const auto root = std::filesystem::weakly_canonical(options.media_root);
        const auto file = std::filesystem::weakly_canonical(root / std::filesystem::path(req.matches[1].str()));
        const auto rel = file.lexically_relative(root);
        if (rel.empty() || rel.native().starts_with("..") || !std::filesystem::is_regular_file(file)) {
          send_error(res, 404, "NotFound", "no such media " + req.matches[1].str());
          return;
        }
        std::ifstream in(file, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string bytes = ss.str();
        res.set_content(bytes, media_type(file, bytes));
      });
    });
  }

  std::string study_secret() const { return study.secret(); }
};

StudyServer::StudyServer(Study& study, StudyServerOptions options)
    : impl_(std::make_unique<Impl>(study, std::move(options))) {
  impl_->routes();
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
    if (impl_->port < 0) throw Error(ErrorKind::PortInUse, "cannot bind " + o.host);
  } else {
    if (!impl_->server.bind_to_port(o.host, o.port)) {
      throw Error(ErrorKind::PortInUse, o.host + ":" + std::to_string(o.port) + " is already in use");
    }
    impl_->port = o.port;
  }
  impl_->thread = std::thread([p = impl_.get()] { p->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::port() const noexcept { return impl_->port; }

void StudyServer::stop() {
  if (impl_->stopped) return;
  impl_->stopped = true;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace webforge
