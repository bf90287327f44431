#pragma once

#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <string>
#include <thread>

#include "webforge/shaper.hpp"

namespace webforge::testing {

struct TransferTiming {
  double total_ms = 0;
  double first_byte_ms = -1;
  std::size_t received = 0;
};

/// Request/response over a socketpair whose client end is shaped: the client
/// sends one byte, the peer answers with `bytes` bytes and closes.
inline TransferTiming measure_transfer(const ConnectivityProfile& profile, std::size_t bytes) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) return {};
  std::thread server([fd = fds[1], bytes] {
    char c;
    if (::recv(fd, &c, 1, 0) == 1) {
      const std::string payload(bytes, 'x');
      std::size_t sent = 0;
      while (sent < payload.size()) {
        const ssize_t n = ::send(fd, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) break;
        sent += static_cast<std::size_t>(n);
      }
    }
    ::close(fd);
  });
  TransferTiming t;
  {
    ShapedStream client(std::make_unique<FdStream>(fds[0]), profile);
    const auto start = ShapeClock::now();
    const char req = 'q';
    client.write(std::span<const char>(&req, 1));
    std::string buf(64 * 1024, '\0');
    while (std::size_t n = client.read(buf)) {
      if (t.first_byte_ms < 0) t.first_byte_ms = std::chrono::duration<double, std::milli>(ShapeClock::now() - start).count();
      t.received += n;
    }
    t.total_ms = std::chrono::duration<double, std::milli>(ShapeClock::now() - start).count();
  }
  server.join();
  return t;
}

/// Closed form for the harness above: one round trip plus serialization.
inline double expected_transfer_ms(const ConnectivityProfile& profile, std::size_t bytes) {
  return double(profile.rtt_ms) + profile.serialization_ms(bytes);
}

}  // namespace webforge::testing
