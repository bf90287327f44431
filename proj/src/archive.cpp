#include "webforge/archive.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "webforge/base64.hpp"
#include "webforge/digest.hpp"
#include "webforge/error.hpp"
#include "webforge/image.hpp"

namespace webforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<ImageTag, std::string_view>, 9> kTagNames = {{
    {ImageTag::food, "food"},
    {ImageTag::landscape, "landscape"},
    {ImageTag::object, "object"},
    {ImageTag::hand, "hand"},
    {ImageTag::animal, "animal"},
    {ImageTag::celebrity, "celebrity"},
    {ImageTag::person, "person"},
    {ImageTag::face, "face"},
    {ImageTag::text, "text"},
}};

bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

bool icontains(std::string_view s, std::string_view needle) {
  for (std::size_t i = 0; i + needle.size() <= s.size(); ++i) {
    if (istarts_with(s.substr(i), needle)) return true;
  }
  return false;
}

bool is_html(std::string_view content_type) { return icontains(content_type, "text/html"); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& p, std::string_view bytes) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write " + tmp.string());
  }
  fs::rename(tmp, p);
}

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> get_optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

json entry_json(const ArchiveEntry& e) {
  json headers = json::array();
  for (const auto& h : e.headers) headers.push_back(json::array({h.name, h.value}));
  return {{"url", e.url},
          {"method", e.method},
          {"status", e.status},
          {"headers", headers},
          {"body_ref", e.body_ref},
          {"content_type", e.content_type},
          {"transfer_size", e.transfer_size},
          {"duration_ms", e.duration_ms},
          {"is_image", e.is_image}};
}

ArchiveEntry entry_from_json(const json& j) {
  ArchiveEntry e;
  e.url = j.at("url").get<std::string>();
  e.method = j.at("method").get<std::string>();
  e.status = j.at("status").get<int>();
  for (const auto& h : j.at("headers")) e.headers.push_back({h.at(0).get<std::string>(), h.at(1).get<std::string>()});
  e.body_ref = j.at("body_ref").get<std::string>();
  e.content_type = j.at("content_type").get<std::string>();
  e.transfer_size = j.at("transfer_size").get<std::uint64_t>();
  e.duration_ms = j.at("duration_ms").get<std::uint64_t>();
  e.is_image = j.at("is_image").get<bool>();
  return e;
}

json image_json(const ImageAnnotation& a) {
  json tags = json::array();
  for (auto t : a.tags) tags.push_back(to_string(t));
  return {{"url", a.url},
          {"alt_text", optional_string(a.alt_text)},
          {"client_prompt", optional_string(a.client_prompt)},
          {"server_prompt", optional_string(a.server_prompt)},
          {"caption", optional_string(a.caption)},
          {"above_fold", a.above_fold ? json(*a.above_fold) : json(nullptr)},
          {"tags", tags},
          {"width", a.width},
          {"height", a.height}};
}

ImageAnnotation image_from_json(const json& j) {
  ImageAnnotation a;
  a.url = j.at("url").get<std::string>();
  a.alt_text = get_optional_string(j, "alt_text");
  a.client_prompt = get_optional_string(j, "client_prompt");
  a.server_prompt = get_optional_string(j, "server_prompt");
  a.caption = get_optional_string(j, "caption");
  if (j.contains("above_fold") && !j.at("above_fold").is_null()) a.above_fold = j.at("above_fold").get<bool>();
  for (const auto& t : j.at("tags")) {
    auto tag = parse_image_tag(t.get<std::string>());
    if (!tag) throw Error(ErrorKind::CorruptManifest, "unknown tag " + t.get<std::string>());
    a.tags.push_back(*tag);
  }
  a.width = j.at("width").get<std::uint32_t>();
  a.height = j.at("height").get<std::uint32_t>();
  return a;
}

std::uint64_t clamp_ms(const json& v) {
  if (!v.is_number()) return 0;
  const double d = v.get<double>();
  return d > 0 ? static_cast<std::uint64_t>(std::llround(d)) : 0;
}

std::string header_value(const std::vector<Header>& headers, std::string_view name) {
  for (const auto& h : headers) {
    if (h.name.size() == name.size() && istarts_with(h.name, name)) return h.value;
  }
  return {};
}

}  // namespace

std::string_view to_string(ImageTag tag) noexcept {
  for (const auto& [t, name] : kTagNames) {
    if (t == tag) return name;
  }
  return "unknown";
}

std::optional<ImageTag> parse_image_tag(std::string_view name) noexcept {
  for (const auto& [t, n] : kTagNames) {
    if (n == name) return t;
  }
  return std::nullopt;
}

bool tags_valid(const std::vector<ImageTag>& tags) noexcept {
  if (tags.size() > 3) return false;
  const bool person = std::find(tags.begin(), tags.end(), ImageTag::person) != tags.end();
  const bool face = std::find(tags.begin(), tags.end(), ImageTag::face) != tags.end();
  return !(person && face);
}

std::string BlobStore::put(std::string bytes) {
  std::string digest = sha256_hex(bytes);
  if (!blobs_.contains(digest)) blobs_.emplace(digest, std::make_shared<const std::string>(std::move(bytes)));
  return digest;
}

const std::string* BlobStore::get(std::string_view digest) const {
  auto it = blobs_.find(digest);
  return it == blobs_.end() ? nullptr : it->second.get();
}

bool BlobStore::operator==(const BlobStore& other) const {
  if (blobs_.size() != other.blobs_.size()) return false;
  for (const auto& [digest, bytes] : blobs_) {
    const std::string* theirs = other.get(digest);
    if (!theirs || *theirs != *bytes) return false;
  }
  return true;
}

const ArchiveEntry* PageArchive::lookup(std::string_view url, std::string_view method) const {
  for (const auto& e : entries) {
    if (e.url == url && e.method == method) return &e;
  }
  return nullptr;
}

const ArchiveEntry& PageArchive::root() const {
  for (const auto& e : entries) {
    if (e.url == page_url && is_html(e.content_type)) return e;
  }
  throw Error(ErrorKind::MissingRootDocument, "no HTML entry for " + page_url);
}

ImageAnnotation* PageArchive::find_image(std::string_view url) {
  for (auto& img : images) {
    if (img.url == url) return &img;
  }
  return nullptr;
}

const ImageAnnotation* PageArchive::find_image(std::string_view url) const {
  return const_cast<PageArchive*>(this)->find_image(url);
}

void validate(const PageArchive& a) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidArchive, why); };
  int roots = 0;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& e = a.entries[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (a.entries[j].url == e.url && a.entries[j].method == e.method) fail("duplicate entry " + e.method + " " + e.url);
    }
    if (!a.blobs.contains(e.body_ref)) fail("entry " + e.url + " references missing blob " + e.body_ref);
    if (e.url == a.page_url && is_html(e.content_type)) ++roots;
    const bool should_be_image = istarts_with(e.content_type, "image/") || a.find_image(e.url) != nullptr;
    if (e.is_image != should_be_image) fail("is_image flag inconsistent for " + e.url);
  }
  if (roots != 1) fail("expected exactly one root HTML entry for " + a.page_url);
  for (const auto& img : a.images) {
    int matches = 0;
    for (const auto& e : a.entries) matches += (e.url == img.url && e.is_image) ? 1 : 0;
    if (matches != 1) fail("manifest image does not resolve to exactly one image entry: " + img.url);
    if (!tags_valid(img.tags)) fail("invalid tag set on " + img.url);
    if (img.server_prompt && img.caption && img.server_prompt->find(*img.caption) == std::string::npos) {
      fail("server_prompt does not contain caption for " + img.url);
    }
  }
}

std::string format_utc(std::chrono::sys_seconds t) {
  const auto days = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{t - days};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()), long(hms.hours().count()), long(hms.minutes().count()),
                long(hms.seconds().count()));
  return buf;
}

std::optional<std::chrono::sys_seconds> parse_utc(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const std::string str(text);
  if (std::sscanf(str.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(unsigned(mo)),
                                        std::chrono::day(unsigned(d))};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days(ymd) + std::chrono::hours(h) + std::chrono::minutes(mi) + std::chrono::seconds(s);
}

ImportResult import_har(std::string_view har_text, std::string_view page_url) {
  json doc = json::parse(har_text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::MalformedCapture, "capture is not valid JSON");
  return import_har(doc, page_url);
}

ImportResult import_har(const json& har, std::string_view page_url) {
  if (!har.is_object() || !har.contains("log") || !har["log"].is_object() || !har["log"].contains("entries") ||
      !har["log"]["entries"].is_array()) {
    throw Error(ErrorKind::MalformedCapture, "missing log.entries array");
  }
  ImportResult result;
  PageArchive& a = result.archive;
  a.page_url = std::string(page_url);
  std::optional<std::chrono::sys_seconds> first_started;

  std::size_t index = 0;
  for (const auto& he : har["log"]["entries"]) {
    const std::string where = "entry " + std::to_string(index++);
    try {
      const auto& req = he.at("request");
      const auto& resp = he.at("response");
      ArchiveEntry e;
      e.url = req.at("url").get<std::string>();
      e.method = req.value("method", std::string("GET"));
      e.status = resp.value("status", 200);
      if (resp.contains("headers")) {
        for (const auto& h : resp["headers"]) e.headers.push_back({h.at("name").get<std::string>(), h.at("value").get<std::string>()});
      }
      const json content = resp.value("content", json::object());
      e.content_type = content.value("mimeType", std::string());
      if (e.content_type.empty()) e.content_type = header_value(e.headers, "content-type");

      std::string body;
      if (content.contains("text") && content["text"].is_string()) {
        const auto& text = content["text"].get_ref<const std::string&>();
        if (content.value("encoding", std::string()) == "base64") {
          auto decoded = base64_decode(text);
          if (!decoded) throw Error(ErrorKind::MalformedCapture, where + ": invalid base64 body");
          body = std::move(*decoded);
        } else {
          body = text;
        }
      } else if (content.value("size", std::int64_t{0}) > 0) {
        result.warnings.push_back("dropped " + e.url + ": body missing from capture");
        continue;
      }

      if (resp.contains("_transferSize") && resp["_transferSize"].is_number() && resp["_transferSize"].get<double>() >= 0) {
        e.transfer_size = resp["_transferSize"].get<std::uint64_t>();
      } else if (resp.contains("bodySize") && resp["bodySize"].is_number() && resp["bodySize"].get<double>() > 0) {
        e.transfer_size = resp["bodySize"].get<std::uint64_t>();
      } else {
        e.transfer_size = body.size();
      }
      e.duration_ms = clamp_ms(he.value("time", json(0)));
      e.is_image = istarts_with(e.content_type, "image/");
      if (he.contains("startedDateTime") && he["startedDateTime"].is_string()) {
        if (auto t = parse_utc(he["startedDateTime"].get<std::string>()); t && (!first_started || *t < *first_started)) {
          first_started = t;
        }
      }
      e.body_ref = a.blobs.put(std::move(body));

      auto dup = std::find_if(a.entries.begin(), a.entries.end(),
                              [&](const ArchiveEntry& x) { return x.url == e.url && x.method == e.method; });
      if (dup != a.entries.end()) {
        result.warnings.push_back("duplicate " + e.method + " " + e.url + ": later entry wins");
        *dup = std::move(e);
      } else {
        a.entries.push_back(std::move(e));
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::MalformedCapture, where + ": " + ex.what());
    }
  }

  const auto roots = std::count_if(a.entries.begin(), a.entries.end(),
                                   [&](const ArchiveEntry& e) { return e.url == page_url && is_html(e.content_type); });
  if (roots == 0) throw Error(ErrorKind::MissingRootDocument, "no HTML entry for " + std::string(page_url));

  // Blobs orphaned by duplicate replacement are not part of the archive.
  BlobStore kept;
  for (const auto& e : a.entries) kept.put(*a.blobs.get(e.body_ref));
  a.blobs = std::move(kept);

  for (const auto& e : a.entries) {
    if (!e.is_image) continue;
    ImageAnnotation img;
    img.url = e.url;
    if (auto info = probe_image(*a.body(e))) {
      img.width = info->width;
      img.height = info->height;
    }
    a.images.push_back(std::move(img));
  }
  a.created_at = first_started.value_or(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  return result;
}

json manifest_json(const PageArchive& a) {
  json entries = json::array();
  for (const auto& e : a.entries) entries.push_back(entry_json(e));
  json images = json::array();
  for (const auto& i : a.images) images.push_back(image_json(i));
  return {{"version", kManifestVersion},
          {"page_url", a.page_url},
          {"created_at", format_utc(a.created_at)},
          {"entries", entries},
          {"images", images}};
}

fs::path save(const PageArchive& a, const fs::path& dir) {
  validate(a);
  fs::create_directories(dir / "blobs");
  for (const auto& [digest, bytes] : a.blobs.items()) {
    const fs::path blob = dir / "blobs" / digest;
    if (fs::exists(blob) && fs::file_size(blob) == bytes->size()) continue;
    write_file_atomic(blob, *bytes);
  }
  const fs::path manifest = dir / "manifest.json";
  write_file_atomic(manifest, manifest_json(a).dump(2) + "\n");
  return manifest;
}

PageArchive load(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::is_regular_file(manifest)) throw Error(ErrorKind::CorruptManifest, "no manifest in " + dir.string());
  const json doc = json::parse(read_file(manifest), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorKind::CorruptManifest, "manifest is not valid JSON");

  PageArchive a;
  try {
    if (doc.at("version").get<int>() != kManifestVersion) {
      throw Error(ErrorKind::CorruptManifest, "unsupported manifest version " + doc.at("version").dump());
    }
    a.page_url = doc.at("page_url").get<std::string>();
    auto created = parse_utc(doc.at("created_at").get<std::string>());
    if (!created) throw Error(ErrorKind::CorruptManifest, "bad created_at");
    a.created_at = *created;
    for (const auto& e : doc.at("entries")) a.entries.push_back(entry_from_json(e));
    for (const auto& i : doc.at("images")) a.images.push_back(image_from_json(i));
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::CorruptManifest, ex.what());
  }

  for (const auto& e : a.entries) {
    if (a.blobs.contains(e.body_ref)) continue;
    const fs::path blob = dir / "blobs" / e.body_ref;
    if (!fs::is_regular_file(blob)) throw Error(ErrorKind::CorruptManifest, "missing blob " + e.body_ref);
    std::string bytes = read_file(blob);
    if (sha256_hex(bytes) != e.body_ref) throw Error(ErrorKind::DigestMismatch, "blob " + e.body_ref + " does not match its digest");
    a.blobs.put(std::move(bytes));
  }
  try {
    validate(a);
  } catch (const Error& ex) {
    throw Error(ErrorKind::CorruptManifest, ex.what());
  }
  return a;
}

}  // namespace webforge
