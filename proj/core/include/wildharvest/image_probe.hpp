#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "wildharvest/types.hpp"

namespace wildharvest {

struct ImageInfo {
  ImageFormat format = ImageFormat::other;
  int width = 0;
  int height = 0;
};

/// Reads container headers only (PNG, JPEG, WEBP, GIF, BMP). nullopt when the
/// bytes are not a recognizable image or carry no usable dimensions.
std::optional<ImageInfo> probe_image(std::span<const std::uint8_t> bytes);

}  // namespace wildharvest
