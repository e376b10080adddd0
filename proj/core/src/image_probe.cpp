#include "wildharvest/image_probe.hpp"

#include <cstring>

namespace wildharvest {

namespace {

std::uint32_t be16(const std::uint8_t* p) { return static_cast<std::uint32_t>(p[0]) << 8 | p[1]; }
std::uint32_t be32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
         static_cast<std::uint32_t>(p[2]) << 8 | p[3];
}
std::uint32_t le16(const std::uint8_t* p) { return static_cast<std::uint32_t>(p[1]) << 8 | p[0]; }
std::uint32_t le24(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[1]) << 8 | p[0];
}
std::uint32_t le32(const std::uint8_t* p) { return le24(p) | static_cast<std::uint32_t>(p[3]) << 24; }

std::optional<ImageInfo> sized(ImageFormat f, std::uint32_t w, std::uint32_t h) {
  if (w == 0 || h == 0 || w > (1u << 30) || h > (1u << 30)) return std::nullopt;
  return ImageInfo{f, static_cast<int>(w), static_cast<int>(h)};
}

std::optional<ImageInfo> probe_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (b.size() < 24 || std::memcmp(b.data(), sig, 8) != 0) return std::nullopt;
  if (std::memcmp(b.data() + 12, "IHDR", 4) != 0) return std::nullopt;
  return sized(ImageFormat::png, be32(b.data() + 16), be32(b.data() + 20));
}

std::optional<ImageInfo> probe_jpeg(std::span<const std::uint8_t> b) {
  if (b.size() < 4 || b[0] != 0xFF || b[1] != 0xD8) return std::nullopt;
  std::size_t i = 2;
  while (i + 4 <= b.size()) {
    if (b[i] != 0xFF) return std::nullopt;
    const std::uint8_t marker = b[i + 1];
    if (marker == 0xFF) {  // fill byte
      ++i;
      continue;
    }
    if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) {
      i += 2;
      continue;
    }
    if (marker == 0xD9 || marker == 0xDA) return std::nullopt;  // no frame header before scan
    const std::size_t len = be16(b.data() + i + 2);
    if (len < 2) return std::nullopt;
    const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
    if (sof) {
      if (i + 9 > b.size()) return std::nullopt;
      return sized(ImageFormat::jpeg, be16(b.data() + i + 7), be16(b.data() + i + 5));
    }
    i += 2 + len;
  }
  return std::nullopt;
}

std::optional<ImageInfo> probe_webp(std::span<const std::uint8_t> b) {
  if (b.size() < 30 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WEBP", 4) != 0)
    return std::nullopt;
  const std::uint8_t* chunk = b.data() + 12;
  if (std::memcmp(chunk, "VP8 ", 4) == 0) {
    // Lossy: frame tag (3 bytes) + start code 9d 01 2a, then 14-bit dimensions.
    const std::uint8_t* f = chunk + 8;
    if (f[3] != 0x9d || f[4] != 0x01 || f[5] != 0x2a) return std::nullopt;
    return sized(ImageFormat::webp, le16(f + 6) & 0x3fff, le16(f + 8) & 0x3fff);
  }
  if (std::memcmp(chunk, "VP8L", 4) == 0) {
    const std::uint8_t* f = chunk + 8;
    if (f[0] != 0x2f) return std::nullopt;
    const std::uint32_t bits = le32(f + 1);
    return sized(ImageFormat::webp, (bits & 0x3fff) + 1, ((bits >> 14) & 0x3fff) + 1);
  }
  if (std::memcmp(chunk, "VP8X", 4) == 0) {
    const std::uint8_t* f = chunk + 8;
    return sized(ImageFormat::webp, le24(f + 4) + 1, le24(f + 7) + 1);
  }
  return std::nullopt;
}

std::optional<ImageInfo> probe_gif(std::span<const std::uint8_t> b) {
  if (b.size() < 10 || (std::memcmp(b.data(), "GIF87a", 6) != 0 && std::memcmp(b.data(), "GIF89a", 6) != 0))
    return std::nullopt;
  return sized(ImageFormat::other, le16(b.data() + 6), le16(b.data() + 8));
}

std::optional<ImageInfo> probe_bmp(std::span<const std::uint8_t> b) {
  if (b.size() < 26 || b[0] != 'B' || b[1] != 'M') return std::nullopt;
  const auto w = static_cast<std::int32_t>(le32(b.data() + 18));
  const auto h = static_cast<std::int32_t>(le32(b.data() + 22));
  return sized(ImageFormat::other, static_cast<std::uint32_t>(w < 0 ? -w : w),
               static_cast<std::uint32_t>(h < 0 ? -h : h));
}

}  // namespace

std::optional<ImageInfo> probe_image(std::span<const std::uint8_t> bytes) {
  if (auto r = probe_png(bytes)) return r;
  if (auto r = probe_jpeg(bytes)) return r;
  if (auto r = probe_webp(bytes)) return r;
  if (auto r = probe_gif(bytes)) return r;
  return probe_bmp(bytes);
}

}  // namespace wildharvest
