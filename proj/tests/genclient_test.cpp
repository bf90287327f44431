#include <gtest/gtest.h>

#include "local_server.hpp"
#include <httplib.h>

#include <algorithm>
#include <thread>

#include <json.hpp>

#include "test_support.hpp"
#include "webforge/digest.hpp"
#include "webforge/error.hpp"
#include "webforge/genclient.hpp"
#include "webforge/image.hpp"

namespace webforge {
namespace {
using testing::LocalServer;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::Io;
}

GenerationConfig seeded(std::uint64_t seed, std::uint32_t w = 1024, std::uint32_t h = 1024) {
  GenerationConfig c;
  c.seed = seed;
  c.width = w;
  c.height = h;
  return c;
}

/// Runs an httplib server on an ephemeral port for the lifetime of the object.

TEST(GenerationConfig, DefaultsAndValidation) {
  GenerationConfig c;
  EXPECT_EQ(c.steps, 20);
  EXPECT_EQ(c.guidance_scale, 5.0);
  EXPECT_EQ(c.width, 1024u);
  EXPECT_EQ(c.height, 1024u);
  EXPECT_FALSE(c.seed);
  EXPECT_NO_THROW(c.validate());
  c.width = 100;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c.width = 56;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c.width = 64;
  c.steps = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
}

TEST(BackendSide, RoundsUpToMultiplesOfEight) {
  EXPECT_EQ(backend_side(0), 1024u);
  EXPECT_EQ(backend_side(1), 64u);
  EXPECT_EQ(backend_side(64), 64u);
  EXPECT_EQ(backend_side(65), 72u);
  EXPECT_EQ(backend_side(799), 800u);
  EXPECT_EQ(backend_side(800), 800u);
}

TEST(StubGenerator, DeterministicForIdenticalInputs) {
  StubGenerator gen;
  auto a = gen.generate("red bicycle", seeded(7));
  auto b = gen.generate("red bicycle", seeded(7));
  EXPECT_EQ(a.png, b.png);
  const auto info = validate_png(a.png);
  ASSERT_TRUE(info);
  EXPECT_EQ(info->width, 1024u);
  EXPECT_EQ(info->height, 1024u);
}

TEST(StubGenerator, SeedChangesDigestAndBytes) {
  // Oracle: the key digests differ, so the rendered images must differ.
  auto key = [](std::uint64_t seed) {
    std::string k = "red bicycle";
    k.push_back('\0');
    for (int i = 0; i < 8; ++i) k.push_back(char((seed >> (8 * i)) & 0xFF));
    for (std::uint32_t v : {1024u, 1024u}) {
      for (int i = 0; i < 4; ++i) k.push_back(char((v >> (8 * i)) & 0xFF));
    }
    return sha256_hex(k);
  };
  ASSERT_NE(key(7), key(8));
  StubGenerator gen;
  EXPECT_NE(gen.generate("red bicycle", seeded(7)).png, gen.generate("red bicycle", seeded(8)).png);
  EXPECT_NE(gen.generate("red bicycle", seeded(7)).png, gen.generate("blue bicycle", seeded(7)).png);
}

TEST(StubGenerator, DimensionContract) {
  StubGenerator gen;
  for (auto [w, h] : {std::pair{64u, 64u}, {800u, 72u}, {128u, 1024u}}) {
    auto info = validate_png(gen.generate("scene", seeded(1, w, h)).png);
    ASSERT_TRUE(info);
    EXPECT_EQ(info->width, w);
    EXPECT_EQ(info->height, h);
  }
}

TEST(StubGenerator, EmptyPromptRejected) {
  StubGenerator gen;
  EXPECT_EQ(kind_of([&] { gen.generate("", seeded(1)); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { gen.generate("  \n", seeded(1)); }), ErrorKind::InvalidArgument);
}

TEST(StubGenerator, BenchmarkingModeSleepsAndCanBeStopped) {
  StubGenerator gen(LatencyProfile{GpuModel::custom, 150, 0});
  auto out = gen.generate("scene", seeded(1, 64, 64));
  EXPECT_GE(out.elapsed_ms, 145);
  EXPECT_LT(out.elapsed_ms, 1000);

  StubGenerator slow(LatencyProfile{GpuModel::custom, 5000, 0});
  std::stop_source stop;
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    stop.request_stop();
  });
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(kind_of([&] { slow.generate("scene", seeded(1, 64, 64), stop.get_token()); }), ErrorKind::BackendUnavailable);
  stopper.join();
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(2));
}

TEST(StubCaptioner, StableAndDigestDerived) {
  const std::string png = testing::tiny_png(16, 16, 9);
  StubCaptioner cap;
  const std::string first = cap.caption(png);
  EXPECT_EQ(first, cap.caption(png));
  EXPECT_EQ(first, "a generated scene " + sha256_hex(png).substr(0, 8));
}

TEST(StubCaptioner, TruncatedPngIsUndecodable) {
  std::string png = testing::tiny_png(16, 16, 9);
  png.resize(png.size() - 10);
  StubCaptioner cap;
  EXPECT_EQ(kind_of([&] { cap.caption(png); }), ErrorKind::UndecodableImage);
  EXPECT_EQ(kind_of([&] { cap.caption("not an image"); }), ErrorKind::UndecodableImage);
}

TEST(Latency, NamedProfiles) {
  EXPECT_EQ(sample_latency(LatencyProfile::named(GpuModel::a100, 0), 123), 500);
  EXPECT_EQ(sample_latency(LatencyProfile::named(GpuModel::a40, 0), 123), 1100);
  EXPECT_EQ(sample_latency(LatencyProfile::named(GpuModel::v100, 0), 123), 1100);
  EXPECT_EQ(LatencyProfile::named(GpuModel::a100).jitter_ms, 50);
}

TEST(Latency, JitterRangeAndDeterminism) {
  const auto p = LatencyProfile::named(GpuModel::a100, 50);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto v = sample_latency(p, seed);
    ASSERT_GE(v, 450);
    ASSERT_LE(v, 550);
    ASSERT_EQ(v, sample_latency(p, seed));
  }
}

TEST(Latency, EmpiricalMedianWithinTwoPercent) {
  for (auto gpu : {GpuModel::v100, GpuModel::a40, GpuModel::a100}) {
    const auto p = LatencyProfile::named(gpu);
    std::vector<std::int64_t> samples;
    for (std::uint64_t seed = 0; seed < 5001; ++seed) samples.push_back(sample_latency(p, seed));
    std::nth_element(samples.begin(), samples.begin() + 2500, samples.end());
    EXPECT_NEAR(double(samples[2500]), double(p.median_ms), 0.02 * double(p.median_ms));
  }
}

TEST(Latency, ParseSpecs) {
  EXPECT_EQ(LatencyProfile::parse("a100")->median_ms, 500);
  auto c = LatencyProfile::parse("custom:750:10");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->median_ms, 750);
  EXPECT_EQ(c->jitter_ms, 10);
  EXPECT_EQ(LatencyProfile::parse("custom:750")->jitter_ms, 50);
  EXPECT_FALSE(LatencyProfile::parse("custom:-3"));
  EXPECT_FALSE(LatencyProfile::parse("h100"));
}

TEST(HttpGenerator, PostsWireContractAndReturnsPng) {
  nlohmann::json seen;
  std::string seen_type;
  LocalServer server([&](httplib::Server& s) {
    s.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
      seen = nlohmann::json::parse(req.body);
      seen_type = req.get_header_value("Content-Type");
      res.set_content(stub_png(seen["prompt"].get<std::string>(), seen["seed"].get<std::uint64_t>(),
                               seen["width"].get<std::uint32_t>(), seen["height"].get<std::uint32_t>()),
                      "image/png");
    });
  });
  HttpGenerator gen(server.url("/generate"));
  auto out = gen.generate("a bridge", seeded(3, 128, 64));
  EXPECT_EQ(out.png, stub_png("a bridge", 3, 128, 64));
  EXPECT_EQ(seen_type, "application/json");
  EXPECT_EQ(seen, nlohmann::json::parse(
                      R"({"prompt":"a bridge","steps":20,"guidance_scale":5.0,"width":128,"height":64,"seed":3})"));
}

TEST(HttpGenerator, ErrorMapping) {
  LocalServer server([](httplib::Server& s) {
    s.Post("/reject", [](const httplib::Request&, httplib::Response& res) { res.status = 422; });
    s.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    s.Post("/garbage", [](const httplib::Request&, httplib::Response& res) { res.set_content("nope", "image/png"); });
    s.Post("/wrongsize", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(stub_png("x", 1, 64, 64), "image/png");
    });
  });
  auto cfg = seeded(1, 128, 128);
  EXPECT_EQ(kind_of([&] { HttpGenerator(server.url("/reject")).generate("p", cfg); }), ErrorKind::BackendRejectedPrompt);
  EXPECT_EQ(kind_of([&] { HttpGenerator(server.url("/broken")).generate("p", cfg); }), ErrorKind::BackendUnavailable);
  EXPECT_EQ(kind_of([&] { HttpGenerator(server.url("/garbage")).generate("p", cfg); }), ErrorKind::MalformedImagePayload);
  EXPECT_EQ(kind_of([&] { HttpGenerator(server.url("/wrongsize")).generate("p", cfg); }), ErrorKind::MalformedImagePayload);
}

TEST(HttpBackends, TimeoutIsBackendUnavailableWithEndpoint) {
  LocalServer server([](httplib::Server& s) {
    s.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1500));
      res.set_content(R"({"caption":"late"})", "application/json");
    });
  });
  HttpCaptioner cap(server.url("/slow"), HttpBackendOptions{std::chrono::milliseconds(200), 1});
  try {
    cap.caption(testing::tiny_png());
    FAIL() << "expected timeout";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendUnavailable);
    EXPECT_NE(std::string(e.what()).find(server.url("/slow")), std::string::npos);
  }
}

TEST(HttpBackends, UnreachableEndpoint) {
  HttpGenerator gen("http://127.0.0.1:1/generate", HttpBackendOptions{std::chrono::milliseconds(300), 1});
  EXPECT_EQ(kind_of([&] { gen.generate("p", seeded(1, 64, 64)); }), ErrorKind::BackendUnavailable);
  EXPECT_EQ(kind_of([] { HttpGenerator("ftp://nowhere"); }), ErrorKind::InvalidArgument);
}

TEST(HttpCaptioner, SendsImageWithContentType) {
  std::string seen_type, seen_body;
  LocalServer server([&](httplib::Server& s) {
    s.Post("/caption", [&](const httplib::Request& req, httplib::Response& res) {
      seen_type = req.get_header_value("Content-Type");
      seen_body = req.body;
      res.set_content(R"({"caption":"a bridge with some clouds in the background"})", "application/json");
    });
  });
  const std::string png = testing::tiny_png();
  HttpCaptioner cap(server.url("/caption"));
  EXPECT_EQ(cap.caption(png), "a bridge with some clouds in the background");
  EXPECT_EQ(seen_type, "image/png");
  EXPECT_EQ(seen_body, png);
  EXPECT_EQ(kind_of([&] { cap.caption(png.substr(0, 30)); }), ErrorKind::UndecodableImage);
}

TEST(InFlightLimiter, SerializesGeneration) {
  StubGenerator gen(LatencyProfile{GpuModel::custom, 100, 0}, 0, 1);
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::thread> threads;
  for (int i = 0; i < 3; ++i) threads.emplace_back([&] { gen.generate("p", seeded(1, 64, 64)); });
  for (auto& t : threads) t.join();
  EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(290));
  EXPECT_EQ(gen.calls(), 3u);
}

}  // namespace
}  // namespace webforge
