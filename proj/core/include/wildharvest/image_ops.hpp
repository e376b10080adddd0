#pragma once

#include <optional>
#include <span>

#include "wildharvest/hash.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

/// Intersects `box` with the image rectangle. Sets `clipped` when anything was cut
/// away; nullopt when nothing of the box remains.
std::optional<BoundingBox> clip_box(const BoundingBox& box, int width, int height, bool& clipped);

/// Decodes `image`, crops `box` (already inside bounds) and re-encodes it as PNG.
/// Throws ImageRejected when the bytes cannot be decoded.
Bytes crop_to_png(std::span<const std::uint8_t> image, const BoundingBox& box);

}  // namespace wildharvest
