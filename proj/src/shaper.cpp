#include "webforge/shaper.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "webforge/error.hpp"

namespace webforge {

ConnectivityProfile ConnectivityProfile::named(ProfileName name) {
  switch (name) {
    case ProfileName::slow: return {name, 20'000'000, 100};
    case ProfileName::average: return {name, 50'000'000, 50};
    case ProfileName::fast: return {name, 100'000'000, 20};
    case ProfileName::custom: break;
  }
  throw Error(ErrorKind::InvalidArgument, "custom profiles need explicit bandwidth and rtt");
}

std::optional<ConnectivityProfile> ConnectivityProfile::parse(std::string_view spec) {
  if (spec == "slow") return named(ProfileName::slow);
  if (spec == "average") return named(ProfileName::average);
  if (spec == "fast") return named(ProfileName::fast);
  if (!spec.starts_with("custom:")) return std::nullopt;
  const std::string rest(spec.substr(7));
  double mbps = 0;
  long long rtt = -1;
  char tail = 0;
  if (std::sscanf(rest.c_str(), "%lf:%lld%c", &mbps, &rtt, &tail) != 2 || !(mbps > 0) || rtt < 0) return std::nullopt;
  return ConnectivityProfile{ProfileName::custom, static_cast<std::uint64_t>(std::llround(mbps * 1e6)), rtt};
}

void ConnectivityProfile::validate() const {
  if (bandwidth_bps == 0) throw Error(ErrorKind::InvalidArgument, "bandwidth must be > 0");
  if (rtt_ms < 0) throw Error(ErrorKind::InvalidArgument, "rtt must be >= 0");
}

std::string ConnectivityProfile::label() const {
  switch (name) {
    case ProfileName::slow: return "slow";
    case ProfileName::average: return "average";
    case ProfileName::fast: return "fast";
    case ProfileName::custom: break;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "custom:%g:%lld", double(bandwidth_bps) / 1e6, static_cast<long long>(rtt_ms));
  return buf;
}

double ConnectivityProfile::serialization_ms(std::uint64_t bytes) const {
  return double(bytes) * 8.0 * 1000.0 / double(bandwidth_bps);
}

TokenBucket::TokenBucket(double rate_bytes_per_sec, double capacity_bytes)
    : rate_(rate_bytes_per_sec), capacity_(capacity_bytes) {}

ShapeClock::time_point TokenBucket::reserve(std::size_t bytes, ShapeClock::time_point now) {
  using Seconds = std::chrono::duration<double>;
  if (!stamp_) stamp_ = now;
  if (now > *stamp_) {
    tokens_ = std::min(capacity_, tokens_ + rate_ * Seconds(now - *stamp_).count());
    stamp_ = now;
  }
  const double need = double(bytes);
  if (tokens_ >= need) {
    tokens_ -= need;
    return *stamp_;
  }
  const double wait = (need - tokens_) / rate_;
  tokens_ = 0;
  *stamp_ += std::chrono::duration_cast<ShapeClock::duration>(Seconds(wait));
  return *stamp_;
}

FdStream::~FdStream() {
  const int fd = fd_.exchange(-1);
  if (fd >= 0) ::close(fd);
}

std::size_t FdStream::read(std::span<char> buffer) {
  for (;;) {
    const int fd = fd_.load();
    if (fd < 0) return 0;
    const ssize_t n = ::recv(fd, buffer.data(), buffer.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno != EINTR) return 0;
  }
}

void FdStream::write(std::span<const char> data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const int fd = fd_.load();
    if (fd < 0) throw Error(ErrorKind::Io, "write on closed stream");
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::Io, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

void FdStream::shutdown_write() {
  if (const int fd = fd_.load(); fd >= 0) ::shutdown(fd, SHUT_WR);
}

void FdStream::close() {
  if (const int fd = fd_.load(); fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

ShapedStream::ShapedStream(std::unique_ptr<Stream> inner, const ConnectivityProfile& profile)
    : inner_(std::move(inner)),
      one_way_(std::chrono::microseconds(profile.rtt_ms * 500)),
      max_chunk_(std::clamp<std::size_t>(static_cast<std::size_t>(double(profile.bandwidth_bps) / 8.0 * 0.1), 1, 16 * 1024)),
      in_bucket_(double(profile.bandwidth_bps) / 8.0, double(profile.bandwidth_bps) / 8.0 * 0.1),
      out_bucket_(double(profile.bandwidth_bps) / 8.0, double(profile.bandwidth_bps) / 8.0 * 0.1) {
  profile.validate();
  reader_ = std::thread([this] { pump_inbound(); });
  writer_ = std::thread([this] { drain_outbound(); });
}

ShapedStream::~ShapedStream() {
  close();
  if (reader_.joinable()) reader_.join();
  if (writer_.joinable()) writer_.join();
}

void ShapedStream::pump_inbound() {
  std::string buf(max_chunk_, '\0');
  ShapeClock::time_point last_release{};
  for (;;) {
    std::size_t n = 0;
    try {
      n = inner_->read(buf);
    } catch (...) {
      n = 0;
    }
    const auto now = ShapeClock::now();
    Chunk chunk;
    if (n == 0) {
      chunk.eof = true;
      chunk.release = std::max(last_release, now + one_way_);
    } else {
      chunk.release = in_bucket_.reserve(n, now) + one_way_;
      chunk.data.assign(buf.data(), n);
    }
    last_release = chunk.release;
    {
      std::lock_guard lock(inbound_.mu);
      if (inbound_.closed) return;
      inbound_.chunks.push_back(std::move(chunk));
    }
    inbound_.cv.notify_all();
    if (n == 0) return;
  }
}

std::size_t ShapedStream::read(std::span<char> buffer) {
  std::unique_lock lock(inbound_.mu);
  for (;;) {
    inbound_.cv.wait(lock, [&] { return inbound_.closed || !inbound_.chunks.empty(); });
    if (inbound_.closed) return 0;
    const auto release = inbound_.chunks.front().release;
    if (ShapeClock::now() < release) {
      inbound_.cv.wait_until(lock, release, [&] { return inbound_.closed; });
      continue;
    }
    Chunk& head = inbound_.chunks.front();
    if (head.eof) return 0;
    const std::size_t n = std::min(buffer.size(), head.data.size() - inbound_offset_);
    std::memcpy(buffer.data(), head.data.data() + inbound_offset_, n);
    inbound_offset_ += n;
    if (inbound_offset_ == head.data.size()) {
      inbound_.chunks.pop_front();
      inbound_offset_ = 0;
    }
    return n;
  }
}

void ShapedStream::write(std::span<const char> data) {
  for (std::size_t off = 0; off < data.size(); off += max_chunk_) {
    const std::size_t n = std::min(max_chunk_, data.size() - off);
    Chunk chunk;
    {
      std::lock_guard bucket_lock(out_bucket_mu_);
      chunk.release = out_bucket_.reserve(n, ShapeClock::now()) + one_way_;
    }
    chunk.data.assign(data.data() + off, n);
    {
      std::lock_guard lock(outbound_.mu);
      if (outbound_.closed) throw Error(ErrorKind::Io, "write on closed shaped stream");
      outbound_.chunks.push_back(std::move(chunk));
    }
    outbound_.cv.notify_all();
  }
}

void ShapedStream::shutdown_write() {
  {
    std::lock_guard lock(outbound_.mu);
    if (outbound_.closed) return;
    Chunk eof;
    eof.eof = true;
    eof.release = ShapeClock::now() + one_way_;
    if (!outbound_.chunks.empty()) eof.release = std::max(eof.release, outbound_.chunks.back().release);
    outbound_.chunks.push_back(std::move(eof));
  }
  outbound_.cv.notify_all();
}

void ShapedStream::drain_outbound() {
  for (;;) {
    Chunk chunk;
    {
      std::unique_lock lock(outbound_.mu);
      outbound_.cv.wait(lock, [&] { return outbound_.closed || !outbound_.chunks.empty(); });
      if (outbound_.closed) return;
      const auto release = outbound_.chunks.front().release;
      if (ShapeClock::now() < release) {
        outbound_.cv.wait_until(lock, release, [&] { return outbound_.closed; });
        continue;
      }
      chunk = std::move(outbound_.chunks.front());
      outbound_.chunks.pop_front();
      in_flight_ = true;
    }
    try {
      if (chunk.eof) {
        inner_->shutdown_write();
      } else {
        inner_->write(chunk.data);
      }
    } catch (...) {
      std::lock_guard lock(outbound_.mu);
      outbound_.closed = true;
      outbound_.chunks.clear();
      return;
    }
    {
      std::lock_guard lock(outbound_.mu);
      in_flight_ = false;
    }
    outbound_.cv.notify_all();
  }
}

bool ShapedStream::flush(std::chrono::milliseconds timeout) {
  std::unique_lock lock(outbound_.mu);
  return outbound_.cv.wait_for(lock, timeout,
                               [&] { return outbound_.closed || (outbound_.chunks.empty() && !in_flight_); });
}

void ShapedStream::close() {
  std::call_once(close_once_, [this] {
    for (Queue* q : {&inbound_, &outbound_}) {
      {
        std::lock_guard lock(q->mu);
        q->closed = true;
      }
      q->cv.notify_all();
    }
    inner_->close();
  });
}

std::unique_ptr<Stream> wrap_stream(std::unique_ptr<Stream> stream, const ConnectivityProfile& profile) {
  return std::make_unique<ShapedStream>(std::move(stream), profile);
}

int listen_tcp(const std::string& host, int port, int* bound_port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(ErrorKind::Io, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(ErrorKind::InvalidArgument, "not an IPv4 address: " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd);
    if (err == EADDRINUSE) throw Error(ErrorKind::PortInUse, host + ":" + std::to_string(port) + " is already in use");
    throw Error(ErrorKind::Io, std::string("bind: ") + std::strerror(err));
  }
  if (::listen(fd, 128) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(ErrorKind::Io, std::string("listen: ") + std::strerror(err));
  }
  if (bound_port) {
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    *bound_port = ntohs(addr.sin_port);
  }
  return fd;
}

int connect_tcp(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(ErrorKind::Io, std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  ::inet_pton(AF_INET, h.c_str(), &addr.sin_addr);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(ErrorKind::Io, std::string("connect: ") + std::strerror(err));
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

struct ShapingRelay::Connection {
  std::unique_ptr<ShapedStream> client;
  std::unique_ptr<FdStream> upstream;
  std::thread runner;
  std::atomic<bool> finished{false};

  void run() {
    std::thread up([this] {
      std::string buf(16 * 1024, '\0');
      try {
        while (std::size_t n = client->read(buf)) upstream->write(std::span<const char>(buf.data(), n));
      } catch (...) {
      }
      upstream->shutdown_write();
    });
    std::string buf(16 * 1024, '\0');
    try {
      while (std::size_t n = upstream->read(buf)) client->write(std::span<const char>(buf.data(), n));
    } catch (...) {
    }
    client->shutdown_write();
    up.join();
    client->flush(std::chrono::seconds(60));
    client->close();
    upstream->close();
    finished = true;
  }
};

ShapingRelay::ShapingRelay(const std::string& listen_host, int listen_port, int upstream_port,
                           ConnectivityProfile profile)
    : upstream_port_(upstream_port), profile_(profile) {
  profile_.validate();
  listen_fd_ = listen_tcp(listen_host, listen_port, &port_);
  acceptor_ = std::thread([this] { accept_loop(); });
}

ShapingRelay::~ShapingRelay() { stop(); }

void ShapingRelay::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<Connection>();
    try {
      conn->upstream = std::make_unique<FdStream>(connect_tcp("127.0.0.1", upstream_port_));
    } catch (const Error&) {
      ::close(fd);
      continue;
    }
    conn->client = std::make_unique<ShapedStream>(std::make_unique<FdStream>(fd), profile_);
    std::lock_guard lock(mu_);
    if (stopping_) return;
    std::erase_if(connections_, [](const std::shared_ptr<Connection>& c) {
      if (!c->finished) return false;
      c->runner.join();
      return true;
    });
    conn->runner = std::thread([conn] { conn->run(); });
    connections_.push_back(std::move(conn));
  }
}

void ShapingRelay::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(connections_);
  }
  for (auto& c : conns) {
    c->client->close();
    c->upstream->close();
    if (c->runner.joinable()) c->runner.join();
  }
}

}  // namespace webforge
