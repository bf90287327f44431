#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace webforge {

enum class ImageFormat { png, jpeg, gif, webp, svg, ico, avif };

struct ImageInfo {
  ImageFormat format;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
};

/// Reads format and dimensions from the header. Returns nullopt for data that
/// is not a recognisable image or is truncated before the dimensions. PNG input
/// is fully validated (chunk CRCs, inflated size), JPEG must end with EOI.
std::optional<ImageInfo> probe_image(std::string_view bytes);

/// Strict PNG check: signature, IHDR, CRC of every chunk, IDAT inflates to
/// exactly the size implied by IHDR, IEND present.
std::optional<ImageInfo> validate_png(std::string_view bytes);

/// Encodes 8-bit RGB pixels (row-major, width*height*3 bytes) as PNG.
std::string encode_png_rgb(std::span<const std::uint8_t> rgb, std::uint32_t width,
                           std::uint32_t height);

std::string_view mime_type(ImageFormat format) noexcept;

}  // namespace webforge
