#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>

namespace webforge {

struct GenerationConfig {
  int steps = 20;
  double guidance_scale = 5.0;
  std::uint32_t width = 1024;
  std::uint32_t height = 1024;
  std::optional<std::uint64_t> seed;  // absent: randomize

  /// Throws Error{InvalidArgument}: steps >= 1, guidance > 0, sides >= 64 and multiples of 8.
  void validate() const;
};

/// Rounds a side up to the next multiple of 8, with 64 as the floor; 0 maps to `fallback`.
std::uint32_t backend_side(std::uint32_t original, std::uint32_t fallback = 1024);

enum class GpuModel { v100, a40, a100, custom };

struct LatencyProfile {
  GpuModel name = GpuModel::custom;
  std::int64_t median_ms = 1;
  std::int64_t jitter_ms = 50;

  static LatencyProfile named(GpuModel gpu, std::int64_t jitter_ms = 50);
  /// "v100", "a40", "a100" or "custom:<median_ms>[:<jitter_ms>]".
  static std::optional<LatencyProfile> parse(std::string_view spec);
  std::string label() const;
};

/// median_ms + uniform integer in [-jitter_ms, +jitter_ms], floored at 0.
/// Deterministic in `rng_seed` on every platform.
std::int64_t sample_latency(const LatencyProfile& profile, std::uint64_t rng_seed);

struct GeneratedImage {
  std::string png;
  std::int64_t elapsed_ms = 0;
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  /// Throws Error{InvalidArgument} for an empty prompt or invalid config.
  virtual GeneratedImage generate(std::string_view prompt, const GenerationConfig& config,
                                  std::stop_token stop = {}) = 0;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(std::string_view image_bytes) = 0;
};

/// Caps concurrent calls into a backend (a GPU generates one image at a time).
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int max_in_flight = 1) : slots_(max_in_flight < 1 ? 1 : max_in_flight) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int slots_;
};

/// Deterministic PNG for (prompt, seed, width, height): the SHA-256 of those
/// inputs picks a background colour, an accent colour and a 4x4 tile mask.
std::string stub_png(std::string_view prompt, std::uint64_t seed, std::uint32_t width, std::uint32_t height);

/// "a generated scene <first 8 hex digits of the image digest>"
std::string stub_caption(std::string_view image_bytes);

class StubGenerator final : public ImageGenerator {
 public:
  StubGenerator() = default;
  /// Benchmarking mode: each call sleeps sample_latency(profile, latency_seed + call index).
  StubGenerator(LatencyProfile profile, std::uint64_t latency_seed = 0, int max_in_flight = 1);

  GeneratedImage generate(std::string_view prompt, const GenerationConfig& config, std::stop_token stop = {}) override;
  std::uint64_t calls() const;

 private:
  std::optional<LatencyProfile> latency_;
  std::uint64_t latency_seed_ = 0;
  InFlightLimiter limiter_{1};
  mutable std::mutex mu_;
  std::uint64_t calls_ = 0;
};

class StubCaptioner final : public Captioner {
 public:
  std::string caption(std::string_view image_bytes) override;
};

struct HttpBackendOptions {
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 1;
};

/// POST {prompt, steps, guidance_scale, width, height, seed} as JSON; expects PNG bytes.
class HttpGenerator final : public ImageGenerator {
 public:
  explicit HttpGenerator(std::string endpoint, HttpBackendOptions options = {});
  GeneratedImage generate(std::string_view prompt, const GenerationConfig& config, std::stop_token stop = {}) override;
  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
  HttpBackendOptions options_;
  InFlightLimiter limiter_;
};

/// POST raw image bytes with their content type; expects {"caption": "..."}.
class HttpCaptioner final : public Captioner {
 public:
  explicit HttpCaptioner(std::string endpoint, HttpBackendOptions options = {});
  std::string caption(std::string_view image_bytes) override;
  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
  HttpBackendOptions options_;
  InFlightLimiter limiter_;
};

/// Serialized request body for the generation endpoint.
std::string generation_request_body(std::string_view prompt, const GenerationConfig& config);

}  // namespace webforge
