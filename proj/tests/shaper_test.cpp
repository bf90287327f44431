#include <gtest/gtest.h>

#include <random>

#include "shaper_support.hpp"
#include "webforge/error.hpp"

using namespace webforge;
using webforge::testing::expected_transfer_ms;
using webforge::testing::measure_transfer;

namespace {

ConnectivityProfile custom(double mbps, std::int64_t rtt) {
  return {ProfileName::custom, static_cast<std::uint64_t>(mbps * 1e6), rtt};
}

}  // namespace

TEST(Profile, NamedDefaults) {
  auto slow = ConnectivityProfile::named(ProfileName::slow);
  EXPECT_EQ(slow.bandwidth_bps, 20'000'000u);
  EXPECT_EQ(slow.rtt_ms, 100);
  auto avg = ConnectivityProfile::named(ProfileName::average);
  EXPECT_EQ(avg.bandwidth_bps, 50'000'000u);
  EXPECT_EQ(avg.rtt_ms, 50);
  auto fast = ConnectivityProfile::named(ProfileName::fast);
  EXPECT_EQ(fast.bandwidth_bps, 100'000'000u);
  EXPECT_EQ(fast.rtt_ms, 20);
}

TEST(Profile, Parse) {
  EXPECT_EQ(ConnectivityProfile::parse("slow")->rtt_ms, 100);
  auto c = ConnectivityProfile::parse("custom:7.5:33");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->bandwidth_bps, 7'500'000u);
  EXPECT_EQ(c->rtt_ms, 33);
  EXPECT_EQ(c->label(), "custom:7.5:33");
  EXPECT_FALSE(ConnectivityProfile::parse("custom:0:10"));
  EXPECT_FALSE(ConnectivityProfile::parse("custom:5:-1"));
  EXPECT_FALSE(ConnectivityProfile::parse("custom:5"));
  EXPECT_FALSE(ConnectivityProfile::parse("custom:5:10x"));
  EXPECT_FALSE(ConnectivityProfile::parse("3g"));
}

TEST(Profile, ValidateRejectsZeroBandwidth) {
  EXPECT_THROW(custom(0, 10).validate(), Error);
  EXPECT_THROW(custom(1, -1).validate(), Error);
}

TEST(TokenBucket, StartsEmptyAndAccrues) {
  const auto t0 = ShapeClock::now();
  TokenBucket b(1000.0, 100.0);
  // 500 bytes at 1000 B/s from an empty bucket: paid off after 0.5 s.
  auto r = b.reserve(500, t0);
  EXPECT_NEAR(std::chrono::duration<double>(r - t0).count(), 0.5, 1e-6);
  // Back-to-back reservation queues behind the debt.
  r = b.reserve(100, t0);
  EXPECT_NEAR(std::chrono::duration<double>(r - t0).count(), 0.6, 1e-6);
  // After a long idle period the credit is capped at capacity.
  const auto later = t0 + std::chrono::seconds(10);
  r = b.reserve(100, later);
  EXPECT_EQ(r, later);
  r = b.reserve(50, later);
  EXPECT_NEAR(std::chrono::duration<double>(r - later).count(), 0.05, 1e-6);
}

TEST(TokenBucket, LongRunRateMatches) {
  const auto t0 = ShapeClock::now();
  TokenBucket b(1e6, 1e5);
  ShapeClock::time_point last = t0;
  for (int i = 0; i < 1000; ++i) last = b.reserve(10'000, t0);
  EXPECT_NEAR(std::chrono::duration<double>(last - t0).count(), 10.0, 1e-3);
}

TEST(ShapedStream, Calibration1MB) {
  for (auto name : {ProfileName::slow, ProfileName::average, ProfileName::fast}) {
    const auto p = ConnectivityProfile::named(name);
    const auto t = measure_transfer(p, 1'000'000);
    const double want = expected_transfer_ms(p, 1'000'000);
    EXPECT_EQ(t.received, 1'000'000u);
    EXPECT_NEAR(t.total_ms, want, want * 0.15) << p.label();
  }
}

TEST(ShapedStream, ZeroByteTransferTakesOneRoundTrip) {
  for (auto name : {ProfileName::slow, ProfileName::average, ProfileName::fast}) {
    const auto p = ConnectivityProfile::named(name);
    const auto t = measure_transfer(p, 0);
    EXPECT_EQ(t.received, 0u);
    EXPECT_NEAR(t.total_ms, double(p.rtt_ms), p.rtt_ms * 0.2) << p.label();
  }
}

TEST(ShapedStream, FastBeatsSlow) {
  const auto fast = measure_transfer(ConnectivityProfile::named(ProfileName::fast), 300'000);
  const auto slow = measure_transfer(ConnectivityProfile::named(ProfileName::slow), 300'000);
  EXPECT_LT(fast.total_ms, slow.total_ms);
}

TEST(ShapedStream, ThroughputCeilingAndLatencyFloor) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5; ++i) {
    const double mbps = 5 + double(rng() % 60);
    const std::int64_t rtt = 10 + std::int64_t(rng() % 60);
    const auto p = custom(mbps, rtt);
    const std::size_t bytes = 200'000 + rng() % 300'000;
    const auto t = measure_transfer(p, bytes);
    ASSERT_EQ(t.received, bytes);
    EXPECT_GE(t.first_byte_ms, rtt * 0.9) << p.label();
    // Everything past the fixed propagation delay is serialization time.
    const double goodput_bps = double(bytes) * 8.0 / ((t.total_ms - double(rtt)) / 1000.0);
    EXPECT_LE(goodput_bps, double(p.bandwidth_bps) * 1.05) << p.label();
  }
}

TEST(ShapedStream, PreservesBytesAndOrder) {
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  std::string payload;
  for (int i = 0; i < 100'000; ++i) payload.push_back(char(i * 31 + i / 7));
  std::thread peer([fd = fds[1], &payload] {
    std::string got;
    char buf[4096];
    while (got.size() < payload.size()) {
      const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
      if (n <= 0) break;
      got.append(buf, std::size_t(n));
    }
    ::send(fd, got.data(), got.size(), MSG_NOSIGNAL);
    ::close(fd);
  });
  ShapedStream s(std::make_unique<FdStream>(fds[0]), custom(200, 2));
  s.write(payload);
  std::string echoed;
  std::string buf(8192, '\0');
  while (std::size_t n = s.read(buf)) echoed.append(buf.data(), n);
  peer.join();
  EXPECT_EQ(echoed, payload);
}

TEST(ShapedStream, CloseUnblocksReader) {
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  auto s = std::make_unique<ShapedStream>(std::make_unique<FdStream>(fds[0]), custom(10, 10));
  std::thread reader([&] {
    std::string buf(16, '\0');
    EXPECT_EQ(s->read(buf), 0u);
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  s->close();
  reader.join();
  ::close(fds[1]);
}

TEST(ShapedStream, ShutdownWritePropagatesEof) {
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  ShapedStream s(std::make_unique<FdStream>(fds[0]), custom(100, 10));
  s.write(std::string_view("abc"));
  s.shutdown_write();
  std::string got;
  char buf[16];
  for (;;) {
    const ssize_t n = ::recv(fds[1], buf, sizeof buf, 0);
    if (n <= 0) break;
    got.append(buf, std::size_t(n));
  }
  EXPECT_EQ(got, "abc");
  ::close(fds[1]);
}

TEST(ShapedStream, MonotoneInBandwidthAndRtt) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 3; ++i) {
    const double mbps = 10 + double(rng() % 40);
    const std::int64_t rtt = 10 + std::int64_t(rng() % 40);
    const std::size_t bytes = 150'000;
    const auto base = measure_transfer(custom(mbps, rtt), bytes).total_ms;
    const auto wider = measure_transfer(custom(mbps * 2, rtt), bytes).total_ms;
    const auto longer = measure_transfer(custom(mbps, rtt + 40), bytes).total_ms;
    EXPECT_LE(wider, base + 2.0);
    EXPECT_GE(longer, base - 2.0);
  }
}

TEST(Relay, ForwardsAndShapes) {
  int upstream_port = 0;
  const int lfd = listen_tcp("127.0.0.1", 0, &upstream_port);
  std::thread upstream([lfd] {
    const int fd = ::accept(lfd, nullptr, nullptr);
    char c;
    if (::recv(fd, &c, 1, 0) == 1) {
      const std::string reply(100'000, 'r');
      ::send(fd, reply.data(), reply.size(), MSG_NOSIGNAL);
    }
    ::close(fd);
  });
  ShapingRelay relay("127.0.0.1", 0, upstream_port, custom(20, 40));
  FdStream client(connect_tcp("127.0.0.1", relay.port()));
  const auto start = ShapeClock::now();
  client.write(std::string_view("q"));
  std::size_t total = 0;
  std::string buf(65536, '\0');
  while (std::size_t n = client.read(buf)) total += n;
  const double ms = std::chrono::duration<double, std::milli>(ShapeClock::now() - start).count();
  upstream.join();
  ::close(lfd);
  EXPECT_EQ(total, 100'000u);
  const double want = 40 + 100'000 * 8.0 / 20e6 * 1000;
  EXPECT_NEAR(ms, want, want * 0.2);
  relay.stop();
}

TEST(Relay, PortInUse) {
  int port = 0;
  const int lfd = listen_tcp("127.0.0.1", 0, &port);
  try {
    ShapingRelay relay("127.0.0.1", port, 1, custom(10, 10));
    FAIL() << "expected PortInUse";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PortInUse);
  }
  ::close(lfd);
}
