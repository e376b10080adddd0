#include "wildharvest/image_ops.hpp"

#include <algorithm>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "wildharvest/errors.hpp"

namespace wildharvest {

std::optional<BoundingBox> clip_box(const BoundingBox& box, int width, int height, bool& clipped) {
  const long long x0 = std::max<long long>(box.x, 0);
  const long long y0 = std::max<long long>(box.y, 0);
  const long long x1 = std::min<long long>(static_cast<long long>(box.x) + box.w, width);
  const long long y1 = std::min<long long>(static_cast<long long>(box.y) + box.h, height);
  if (x1 <= x0 || y1 <= y0) {
    clipped = true;
    return std::nullopt;
  }
  BoundingBox out{static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1 - x0), static_cast<int>(y1 - y0)};
  clipped = !(out == box);
  return out;
}

Bytes crop_to_png(std::span<const std::uint8_t> image, const BoundingBox& box) {
  const cv::Mat raw(1, static_cast<int>(image.size()), CV_8UC1, const_cast<std::uint8_t*>(image.data()));
  const cv::Mat decoded = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw ImageRejected("image cannot be decoded for cropping");
  if (box.x < 0 || box.y < 0 || box.w <= 0 || box.h <= 0 || box.x + box.w > decoded.cols || box.y + box.h > decoded.rows)
    throw InvariantError("crop box lies outside the image");
  const cv::Mat crop = decoded(cv::Rect(box.x, box.y, box.w, box.h));
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", crop, out, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw ImageRejected("crop could not be encoded");
  return out;
}

}  // namespace wildharvest
