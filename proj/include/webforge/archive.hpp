#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace webforge {

enum class ImageTag { food, landscape, object, hand, animal, celebrity, person, face, text };

std::string_view to_string(ImageTag tag) noexcept;
std::optional<ImageTag> parse_image_tag(std::string_view name) noexcept;

/// At most three tags, never both person and face.
bool tags_valid(const std::vector<ImageTag>& tags) noexcept;

struct Header {
  std::string name;
  std::string value;
  bool operator==(const Header&) const = default;
};

struct ArchiveEntry {
  std::string url;
  std::string method = "GET";
  int status = 200;
  std::vector<Header> headers;
  std::string body_ref;  // hex SHA-256 of the body
  std::string content_type;
  std::uint64_t transfer_size = 0;
  std::uint64_t duration_ms = 0;
  bool is_image = false;

  bool operator==(const ArchiveEntry&) const = default;
};

struct ImageAnnotation {
  std::string url;
  std::optional<std::string> alt_text;
  std::optional<std::string> client_prompt;
  std::optional<std::string> server_prompt;
  std::optional<std::string> caption;
  // Unset means "not known"; consumers fall back to the first three manifest images.
  std::optional<bool> above_fold;
  std::vector<ImageTag> tags;
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  bool operator==(const ImageAnnotation&) const = default;
};

/// Content-addressed body storage. Bodies are shared between copies of an archive.
class BlobStore {
 public:
  /// Stores `bytes` and returns its digest; storing identical bytes twice is a no-op.
  std::string put(std::string bytes);
  const std::string* get(std::string_view digest) const;
  bool contains(std::string_view digest) const { return get(digest) != nullptr; }
  std::size_t size() const noexcept { return blobs_.size(); }
  const auto& items() const noexcept { return blobs_; }

  bool operator==(const BlobStore& other) const;

 private:
  std::map<std::string, std::shared_ptr<const std::string>, std::less<>> blobs_;
};

struct PageArchive {
  std::string page_url;
  std::vector<ArchiveEntry> entries;
  std::vector<ImageAnnotation> images;
  std::chrono::sys_seconds created_at{};
  BlobStore blobs;

  /// Exact match on (url, method); nullptr when absent.
  const ArchiveEntry* lookup(std::string_view url, std::string_view method = "GET") const;
  const std::string* body(const ArchiveEntry& entry) const { return blobs.get(entry.body_ref); }
  const ArchiveEntry& root() const;

  ImageAnnotation* find_image(std::string_view url);
  const ImageAnnotation* find_image(std::string_view url) const;

  bool operator==(const PageArchive&) const = default;
};

/// Throws Error{InvalidArchive} describing the first violated invariant.
void validate(const PageArchive& archive);

struct ImportResult {
  PageArchive archive;
  std::vector<std::string> warnings;
};

/// Builds an archive from a HAR 1.2 document.
ImportResult import_har(std::string_view har_text, std::string_view page_url);
ImportResult import_har(const nlohmann::json& har, std::string_view page_url);

/// Writes `dir/manifest.json` and `dir/blobs/<digest>`; returns the manifest path.
std::filesystem::path save(const PageArchive& archive, const std::filesystem::path& dir);
PageArchive load(const std::filesystem::path& dir);

inline constexpr int kManifestVersion = 1;

nlohmann::json manifest_json(const PageArchive& archive);

std::string format_utc(std::chrono::sys_seconds t);
std::optional<std::chrono::sys_seconds> parse_utc(std::string_view text);

}  // namespace webforge
