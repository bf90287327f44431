#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace webforge {

enum class ProfileName { slow, average, fast, custom };

struct ConnectivityProfile {
  ProfileName name = ProfileName::custom;
  std::uint64_t bandwidth_bps = 0;
  std::int64_t rtt_ms = 0;

  /// slow = 20 Mbps / 100 ms, average = 50 Mbps / 50 ms, fast = 100 Mbps / 20 ms (all symmetric).
  static ConnectivityProfile named(ProfileName name);
  /// "slow" | "average" | "fast" | "custom:<mbps>:<rtt_ms>"
  static std::optional<ConnectivityProfile> parse(std::string_view spec);

  void validate() const;
  std::string label() const;
  /// Transfer time of `bytes` at this bandwidth, in milliseconds.
  double serialization_ms(std::uint64_t bytes) const;
};

using ShapeClock = std::chrono::steady_clock;

/// Token bucket on a virtual clock. The bucket is empty until the first
/// reservation and holds at most `capacity_bytes` of credit afterwards.
/// reserve() may go into debt: it returns the instant at which the bytes
/// have been paid for.
class TokenBucket {
 public:
  TokenBucket(double rate_bytes_per_sec, double capacity_bytes);
  ShapeClock::time_point reserve(std::size_t bytes, ShapeClock::time_point now);

 private:
  double rate_;
  double capacity_;
  double tokens_ = 0;
  std::optional<ShapeClock::time_point> stamp_;
};

/// Minimal byte stream. read() returns 0 at end of stream.
class Stream {
 public:
  virtual ~Stream() = default;
  virtual std::size_t read(std::span<char> buffer) = 0;
  virtual void write(std::span<const char> data) = 0;
  virtual void shutdown_write() = 0;
  virtual void close() = 0;
};

/// Owns a connected socket descriptor.
class FdStream final : public Stream {
 public:
  explicit FdStream(int fd) : fd_(fd) {}
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  std::size_t read(std::span<char> buffer) override;
  void write(std::span<const char> data) override;
  void shutdown_write() override;
  void close() override;
  int fd() const noexcept { return fd_.load(); }

 private:
  std::atomic<int> fd_;
};

/// Delays each direction by rtt/2 and meters it with its own token bucket
/// (rate = bandwidth, capacity = 100 ms of tokens). Byte order is preserved
/// and end-of-stream is delivered after the data in front of it.
class ShapedStream final : public Stream {
 public:
  ShapedStream(std::unique_ptr<Stream> inner, const ConnectivityProfile& profile);
  ~ShapedStream() override;

  std::size_t read(std::span<char> buffer) override;
  void write(std::span<const char> data) override;
  void shutdown_write() override;
  void close() override;
  /// Waits until every queued outbound chunk (including a pending
  /// end-of-stream) has been handed to the inner stream.
  bool flush(std::chrono::milliseconds timeout);

 private:
  struct Chunk {
    ShapeClock::time_point release;
    std::string data;
    bool eof = false;
  };
  struct Queue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Chunk> chunks;
    bool closed = false;
  };

  void pump_inbound();
  void drain_outbound();

  std::unique_ptr<Stream> inner_;
  ShapeClock::duration one_way_;
  std::size_t max_chunk_;
  TokenBucket in_bucket_;
  TokenBucket out_bucket_;
  std::mutex out_bucket_mu_;
  Queue inbound_;
  Queue outbound_;
  std::size_t inbound_offset_ = 0;
  bool in_flight_ = false;
  std::thread reader_;
  std::thread writer_;
  std::once_flag close_once_;
};

std::unique_ptr<Stream> wrap_stream(std::unique_ptr<Stream> stream, const ConnectivityProfile& profile);

/// TCP listener that forwards every accepted connection to `upstream_port`
/// on loopback, shaping the client side of each connection independently.
class ShapingRelay {
 public:
  /// Throws Error{PortInUse} if the listen port cannot be bound.
  ShapingRelay(const std::string& listen_host, int listen_port, int upstream_port, ConnectivityProfile profile);
  ~ShapingRelay();
  ShapingRelay(const ShapingRelay&) = delete;
  ShapingRelay& operator=(const ShapingRelay&) = delete;

  int port() const noexcept { return port_; }
  void stop();

 private:
  struct Connection;
  void accept_loop();

  int listen_fd_ = -1;
  int port_ = 0;
  int upstream_port_;
  ConnectivityProfile profile_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::thread acceptor_;
};

/// Binds a listening TCP socket; port 0 picks an ephemeral port.
/// Throws Error{PortInUse} on EADDRINUSE, Error{Io} otherwise.
int listen_tcp(const std::string& host, int port, int* bound_port = nullptr);
int connect_tcp(const std::string& host, int port);

}  // namespace webforge
