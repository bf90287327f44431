#include "webforge/image.hpp"

#include <zlib.h>

#include <array>
#include <stdexcept>
#include <vector>

namespace webforge {
namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t be32(std::string_view b, std::size_t at) {
  return (std::uint32_t(std::uint8_t(b[at])) << 24) | (std::uint32_t(std::uint8_t(b[at + 1])) << 16) |
         (std::uint32_t(std::uint8_t(b[at + 2])) << 8) | std::uint32_t(std::uint8_t(b[at + 3]));
}
std::uint32_t be16(std::string_view b, std::size_t at) {
  return (std::uint32_t(std::uint8_t(b[at])) << 8) | std::uint32_t(std::uint8_t(b[at + 1]));
}
std::uint32_t le16(std::string_view b, std::size_t at) {
  return std::uint32_t(std::uint8_t(b[at])) | (std::uint32_t(std::uint8_t(b[at + 1])) << 8);
}
std::uint32_t le24(std::string_view b, std::size_t at) {
  return le16(b, at) | (std::uint32_t(std::uint8_t(b[at + 2])) << 16);
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

void put_chunk(std::string& out, const char type[4], std::string_view data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.append(type, 4);
  out.append(data);
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(out.data() + type_at), static_cast<uInt>(4 + data.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

bool starts_with_bytes(std::string_view b, std::string_view prefix) { return b.substr(0, prefix.size()) == prefix; }

std::optional<ImageInfo> probe_jpeg(std::string_view b) {
  if (b.size() < 4 || std::uint8_t(b[0]) != 0xFF || std::uint8_t(b[1]) != 0xD8) return std::nullopt;
  if (std::uint8_t(b[b.size() - 2]) != 0xFF || std::uint8_t(b[b.size() - 1]) != 0xD9) return std::nullopt;
  std::size_t i = 2;
  while (i + 4 <= b.size()) {
    if (std::uint8_t(b[i]) != 0xFF) return std::nullopt;
    const std::uint8_t marker = std::uint8_t(b[i + 1]);
    if (marker == 0xFF) {
      ++i;
      continue;
    }
    if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) {
      i += 2;
      continue;
    }
    const std::uint32_t len = be16(b, i + 2);
    if (len < 2 || i + 2 + len > b.size()) return std::nullopt;
    const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
    if (sof) {
      if (len < 7) return std::nullopt;
      return ImageInfo{ImageFormat::jpeg, be16(b, i + 7), be16(b, i + 5)};
    }
    i += 2 + len;
  }
  return std::nullopt;
}

std::optional<ImageInfo> probe_webp(std::string_view b) {
  if (b.size() < 30 || !starts_with_bytes(b, "RIFF") || b.substr(8, 4) != "WEBP") return std::nullopt;
  const std::string_view fourcc = b.substr(12, 4);
  if (fourcc == "VP8X") return ImageInfo{ImageFormat::webp, le24(b, 24) + 1, le24(b, 27) + 1};
  if (fourcc == "VP8L") {
    const std::uint32_t bits = std::uint32_t(std::uint8_t(b[21])) | (std::uint32_t(std::uint8_t(b[22])) << 8) |
                               (std::uint32_t(std::uint8_t(b[23])) << 16) |
                               (std::uint32_t(std::uint8_t(b[24])) << 24);
    return ImageInfo{ImageFormat::webp, (bits & 0x3FFF) + 1, ((bits >> 14) & 0x3FFF) + 1};
  }
  if (fourcc == "VP8 ") return ImageInfo{ImageFormat::webp, le16(b, 26) & 0x3FFF, le16(b, 28) & 0x3FFF};
  return std::nullopt;
}

}  // namespace

std::optional<ImageInfo> validate_png(std::string_view b) {
  if (b.size() < 8 + 25 + 12 ||
      b.substr(0, 8) != std::string_view(reinterpret_cast<const char*>(kPngSignature.data()), 8)) {
    return std::nullopt;
  }
  std::size_t i = 8;
  std::optional<ImageInfo> info;
  std::uint8_t bit_depth = 0, color_type = 0, interlace = 0;
  std::string idat;
  bool saw_end = false;
  while (i + 12 <= b.size()) {
    const std::uint32_t len = be32(b, i);
    if (len > b.size() || i + 12 + len > b.size()) return std::nullopt;
    const std::string_view type = b.substr(i + 4, 4);
    const std::string_view data = b.substr(i + 8, len);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(b.data() + i + 4), static_cast<uInt>(4 + len));
    if (static_cast<std::uint32_t>(crc) != be32(b, i + 8 + len)) return std::nullopt;
    if (type == "IHDR") {
      if (len != 13 || info) return std::nullopt;
      info = ImageInfo{ImageFormat::png, be32(data, 0), be32(data, 4)};
      bit_depth = std::uint8_t(data[8]);
      color_type = std::uint8_t(data[9]);
      interlace = std::uint8_t(data[12]);
    } else if (!info) {
      return std::nullopt;
    } else if (type == "IDAT") {
      idat.append(data);
    } else if (type == "IEND") {
      saw_end = true;
      break;
    }
    i += 12 + len;
  }
  if (!info || !saw_end || info->width == 0 || info->height == 0) return std::nullopt;

  int channels = 0;
  switch (color_type) {
    case 0: channels = 1; break;
    case 2: channels = 3; break;
    case 3: channels = 1; break;
    case 4: channels = 2; break;
    case 6: channels = 4; break;
    default: return std::nullopt;
  }
  if (interlace != 0) return info;  // Adam7 sizes are not worth recomputing here.
  const std::uint64_t row_bits = std::uint64_t(info->width) * channels * bit_depth;
  const std::uint64_t expected = (1 + (row_bits + 7) / 8) * info->height;
  if (expected > (1ull << 31)) return std::nullopt;

  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) return std::nullopt;
  std::vector<std::uint8_t> sink(64 * 1024);
  zs.next_in = reinterpret_cast<Bytef*>(idat.data());
  zs.avail_in = static_cast<uInt>(idat.size());
  std::uint64_t total = 0;
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = sink.data();
    zs.avail_out = static_cast<uInt>(sink.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    total += sink.size() - zs.avail_out;
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) break;
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || total != expected) return std::nullopt;
  return info;
}

std::optional<ImageInfo> probe_image(std::string_view b) {
  if (starts_with_bytes(b, std::string_view(reinterpret_cast<const char*>(kPngSignature.data()), 8))) {
    return validate_png(b);
  }
  if (b.size() >= 4 && std::uint8_t(b[0]) == 0xFF && std::uint8_t(b[1]) == 0xD8) return probe_jpeg(b);
  if (b.size() >= 10 && (starts_with_bytes(b, "GIF87a") || starts_with_bytes(b, "GIF89a"))) {
    if (b.back() != ';') return std::nullopt;
    return ImageInfo{ImageFormat::gif, le16(b, 6), le16(b, 8)};
  }
  if (starts_with_bytes(b, "RIFF")) return probe_webp(b);
  if (b.size() >= 22 && b[0] == 0 && b[1] == 0 && b[2] == 1 && b[3] == 0) {
    const std::uint32_t w = std::uint8_t(b[6]);
    const std::uint32_t h = std::uint8_t(b[7]);
    return ImageInfo{ImageFormat::ico, w == 0 ? 256 : w, h == 0 ? 256 : h};
  }
  return std::nullopt;
}

std::string encode_png_rgb(std::span<const std::uint8_t> rgb, std::uint32_t width, std::uint32_t height) {
  const std::size_t stride = std::size_t(width) * 3;
  if (width == 0 || height == 0 || rgb.size() != stride * height) {
    throw std::invalid_argument("encode_png_rgb: pixel buffer does not match dimensions");
  }
  std::string raw;
  raw.reserve((stride + 1) * height);
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(rgb.data() + y * stride), stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string z(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("encode_png_rgb: deflate failed");
  }
  z.resize(bound);

  std::string out(reinterpret_cast<const char*>(kPngSignature.data()), kPngSignature.size());
  std::string ihdr;
  put_be32(ihdr, width);
  put_be32(ihdr, height);
  ihdr += '\x08';  // bit depth
  ihdr += '\x02';  // truecolor
  ihdr += std::string(3, '\0');
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

std::string_view mime_type(ImageFormat format) noexcept {
  switch (format) {
    case ImageFormat::png: return "image/png";
    case ImageFormat::jpeg: return "image/jpeg";
    case ImageFormat::gif: return "image/gif";
    case ImageFormat::webp: return "image/webp";
    case ImageFormat::svg: return "image/svg+xml";
    case ImageFormat::ico: return "image/x-icon";
    case ImageFormat::avif: return "image/avif";
  }
  return "application/octet-stream";
}

}  // namespace webforge
