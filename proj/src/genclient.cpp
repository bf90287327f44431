#include "webforge/genclient.hpp"

#include <httplib.h>

#include <cstring>
#include <random>
#include <thread>
#include <vector>

#include <json.hpp>

#include "http_endpoint.hpp"
#include "webforge/digest.hpp"
#include "webforge/error.hpp"
#include "webforge/image.hpp"

namespace webforge {
namespace {

using Clock = std::chrono::steady_clock;

class SlotGuard {
 public:
  explicit SlotGuard(InFlightLimiter& l) : l_(l) { l_.acquire(); }
  ~SlotGuard() { l_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  InFlightLimiter& l_;
};

std::int64_t ms_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

void require_prompt(std::string_view prompt) {
  if (prompt.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw Error(ErrorKind::InvalidArgument, "prompt must be nonempty");
  }
}

}  // namespace

void GenerationConfig::validate() const {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1");
  if (!(guidance_scale > 0)) throw Error(ErrorKind::InvalidArgument, "guidance_scale must be > 0");
  for (std::uint32_t side : {width, height}) {
    if (side < 64 || side % 8 != 0) {
      throw Error(ErrorKind::InvalidArgument, "width/height must be >= 64 and multiples of 8");
    }
  }
}

std::uint32_t backend_side(std::uint32_t original, std::uint32_t fallback) {
  if (original == 0) return fallback;
  const std::uint32_t rounded = (original + 7) / 8 * 8;
  return rounded < 64 ? 64 : rounded;
}

LatencyProfile LatencyProfile::named(GpuModel gpu, std::int64_t jitter_ms) {
  switch (gpu) {
    case GpuModel::v100: return {gpu, 1100, jitter_ms};
    case GpuModel::a40: return {gpu, 1100, jitter_ms};
    case GpuModel::a100: return {gpu, 500, jitter_ms};
    case GpuModel::custom: break;
  }
  throw Error(ErrorKind::InvalidArgument, "custom latency profiles need an explicit median");
}

std::optional<LatencyProfile> LatencyProfile::parse(std::string_view spec) {
  if (spec == "v100") return named(GpuModel::v100);
  if (spec == "a40") return named(GpuModel::a40);
  if (spec == "a100") return named(GpuModel::a100);
  if (!spec.starts_with("custom:")) return std::nullopt;
  spec.remove_prefix(7);
  const std::string s(spec);
  long long median = 0, jitter = 50;
  char tail = 0;
  const int n = std::sscanf(s.c_str(), "%lld:%lld%c", &median, &jitter, &tail);
  if (n < 1 || n > 2 || median <= 0 || jitter < 0) return std::nullopt;
  return LatencyProfile{GpuModel::custom, median, jitter};
}

std::string LatencyProfile::label() const {
  switch (name) {
    case GpuModel::v100: return "v100";
    case GpuModel::a40: return "a40";
    case GpuModel::a100: return "a100";
    case GpuModel::custom: break;
  }
  return "custom:" + std::to_string(median_ms) + ":" + std::to_string(jitter_ms);
}

std::int64_t sample_latency(const LatencyProfile& profile, std::uint64_t rng_seed) {
  if (profile.jitter_ms <= 0) return profile.median_ms;
  std::mt19937_64 engine(rng_seed);
  const std::uint64_t span = static_cast<std::uint64_t>(profile.jitter_ms) * 2 + 1;
  const std::int64_t offset = static_cast<std::int64_t>(engine() % span) - profile.jitter_ms;
  const std::int64_t v = profile.median_ms + offset;
  return v < 0 ? 0 : v;
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return slots_ > 0; });
  --slots_;
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    ++slots_;
  }
  cv_.notify_one();
}

std::string stub_png(std::string_view prompt, std::uint64_t seed, std::uint32_t width, std::uint32_t height) {
  std::string key(prompt);
  key.push_back('\0');
  for (int i = 0; i < 8; ++i) key.push_back(static_cast<char>((seed >> (8 * i)) & 0xFF));
  for (std::uint32_t v : {width, height}) {
    for (int i = 0; i < 4; ++i) key.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  const Sha256 d = sha256(key);
  const std::uint8_t background[3] = {d[0], d[1], d[2]};
  std::uint8_t accent[3] = {d[3], d[4], d[5]};
  if (std::memcmp(background, accent, 3) == 0) accent[0] ^= 0x80;
  const std::uint16_t mask = static_cast<std::uint16_t>((d[6] << 8) | d[7]);

  std::vector<std::uint8_t> rgb(std::size_t(width) * height * 3);
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint32_t ty = y * 4 / height;
    for (std::uint32_t x = 0; x < width; ++x) {
      const std::uint32_t tx = x * 4 / width;
      const bool on = (mask >> (ty * 4 + tx)) & 1u;
      const std::uint8_t* c = on ? accent : background;
      std::memcpy(&rgb[(std::size_t(y) * width + x) * 3], c, 3);
    }
  }
  return encode_png_rgb(rgb, width, height);
}

std::string stub_caption(std::string_view image_bytes) {
  if (!probe_image(image_bytes)) throw Error(ErrorKind::UndecodableImage, "image does not decode");
  return "a generated scene " + sha256_hex(image_bytes).substr(0, 8);
}

StubGenerator::StubGenerator(LatencyProfile profile, std::uint64_t latency_seed, int max_in_flight)
    : latency_(profile), latency_seed_(latency_seed), limiter_(max_in_flight) {}

std::uint64_t StubGenerator::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

GeneratedImage StubGenerator::generate(std::string_view prompt, const GenerationConfig& config,
                                       std::stop_token stop) {
  require_prompt(prompt);
  config.validate();
  const auto start = Clock::now();
  std::uint64_t call = 0;
  {
    std::lock_guard lock(mu_);
    call = calls_++;
  }
  const std::uint64_t seed = config.seed ? *config.seed : std::random_device{}();
  GeneratedImage out;
  if (latency_) {
    SlotGuard slot(limiter_);
    const auto until = Clock::now() + std::chrono::milliseconds(sample_latency(*latency_, latency_seed_ + call));
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lock(m);
    cv.wait_until(lock, stop, until, [] { return false; });
    if (stop.stop_requested()) throw Error(ErrorKind::BackendUnavailable, "generation aborted by shutdown");
    out.png = stub_png(prompt, seed, config.width, config.height);
  } else {
    out.png = stub_png(prompt, seed, config.width, config.height);
  }
  out.elapsed_ms = ms_since(start);
  return out;
}

std::string StubCaptioner::caption(std::string_view image_bytes) { return stub_caption(image_bytes); }

std::string generation_request_body(std::string_view prompt, const GenerationConfig& config) {
  nlohmann::json body = {{"prompt", std::string(prompt)},
                         {"steps", config.steps},
                         {"guidance_scale", config.guidance_scale},
                         {"width", config.width},
                         {"height", config.height}};
  body["seed"] = config.seed ? nlohmann::json(*config.seed) : nlohmann::json(nullptr);
  return body.dump();
}

HttpGenerator::HttpGenerator(std::string endpoint, HttpBackendOptions options)
    : endpoint_(std::move(endpoint)), options_(options), limiter_(options.max_in_flight) {
  detail::split_endpoint(endpoint_, ErrorKind::InvalidArgument);
}

GeneratedImage HttpGenerator::generate(std::string_view prompt, const GenerationConfig& config, std::stop_token) {
  require_prompt(prompt);
  config.validate();
  const auto ep = detail::split_endpoint(endpoint_, ErrorKind::BackendUnavailable);
  SlotGuard slot(limiter_);
  const auto start = Clock::now();
  auto cli = detail::make_client(ep, options_.timeout);
  auto res = cli.Post(ep.path, generation_request_body(prompt, config), "application/json");
  if (!res) {
    throw Error(ErrorKind::BackendUnavailable, endpoint_ + ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 400 && res->status < 500) {
    throw Error(ErrorKind::BackendRejectedPrompt, endpoint_ + " returned " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::BackendUnavailable, endpoint_ + " returned " + std::to_string(res->status));
  }
  const auto info = validate_png(res->body);
  if (!info) throw Error(ErrorKind::MalformedImagePayload, endpoint_ + ": response is not a valid PNG");
  if (info->width != config.width || info->height != config.height) {
    throw Error(ErrorKind::MalformedImagePayload,
                endpoint_ + ": expected " + std::to_string(config.width) + "x" + std::to_string(config.height) +
                    ", got " + std::to_string(info->width) + "x" + std::to_string(info->height));
  }
  return GeneratedImage{std::move(res->body), ms_since(start)};
}

HttpCaptioner::HttpCaptioner(std::string endpoint, HttpBackendOptions options)
    : endpoint_(std::move(endpoint)), options_(options), limiter_(options.max_in_flight) {
  detail::split_endpoint(endpoint_, ErrorKind::InvalidArgument);
}

std::string HttpCaptioner::caption(std::string_view image_bytes) {
  const auto info = probe_image(image_bytes);
  if (!info) throw Error(ErrorKind::UndecodableImage, "image does not decode");
  const auto ep = detail::split_endpoint(endpoint_, ErrorKind::BackendUnavailable);
  SlotGuard slot(limiter_);
  auto cli = detail::make_client(ep, options_.timeout);
  auto res = cli.Post(ep.path, std::string(image_bytes), std::string(mime_type(info->format)));
  if (!res) throw Error(ErrorKind::BackendUnavailable, endpoint_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorKind::BackendUnavailable, endpoint_ + " returned " + std::to_string(res->status));
  }
  const auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.is_object() || !body.contains("caption") || !body["caption"].is_string()) {
    throw Error(ErrorKind::BackendUnavailable, endpoint_ + ": malformed caption response");
  }
  return body["caption"].get<std::string>();
}

}  // namespace webforge
