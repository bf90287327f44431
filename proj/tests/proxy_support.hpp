#pragma once

#include <optional>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "webforge/archive.hpp"

namespace webforge::testing {

inline constexpr const char* kSite = "http://site.test";

struct MixedImage {
  std::string path;
  std::string mime;
  std::optional<std::string> client_prompt;
  std::optional<std::string> server_prompt;
  std::uint32_t width;
  std::uint32_t height;
};

inline std::vector<MixedImage> mixed_images() {
  return {
      {"/img/a.png", "image/png", "red bike", "a bicycle; red bike", 100, 60},
      {"/img/b.jpg", "image/png", "", "a dog", 33, 64},
      {"/img/c.gif", "image/png", "sunset", std::nullopt, 16, 16},
      {"/img/d.webp", "image/png", std::nullopt, std::nullopt, 20, 20},
      {"/img/e.png", "image/png", "  ", " \t", 8, 8},
  };
}

/// Root page, a stylesheet, a script, a POST endpoint and five images with
/// varied prompt availability. The root is recorded over https.
inline PageArchive mixed_archive() {
  std::vector<HarSpec> specs;
  specs.push_back({"https://site.test/", "text/html; charset=utf-8", "<html><body><p>hello</p></body></html>"});
  specs.push_back({std::string(kSite) + "/style.css", "text/css", "body{color:red}"});
  specs.push_back({std::string(kSite) + "/app.js", "application/javascript", "console.log(1)"});
  specs.push_back({std::string(kSite) + "/api", "application/json", "{\"ok\":true}", "POST"});
  std::uint8_t shade = 10;
  for (const auto& img : mixed_images()) {
    specs.push_back({std::string(kSite) + img.path, img.mime, tiny_png(img.width, img.height, shade += 20)});
  }
  auto archive = import_har(make_har(specs), "https://site.test/").archive;
  for (const auto& img : mixed_images()) {
    auto* a = archive.find_image(std::string(kSite) + img.path);
    a->client_prompt = img.client_prompt;
    a->server_prompt = img.server_prompt;
  }
  return archive;
}

}  // namespace webforge::testing
