#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "wildharvest/hash.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

/// Sibling `<hash>.meta` record.
struct ImageMeta {
  ImageFormat format = ImageFormat::other;
  int width = 0;
  int height = 0;
  /// Sorted union of every URL the bytes were fetched from.
  std::vector<std::string> source_urls;

  bool operator==(const ImageMeta&) const = default;
};

/// Content-addressed blob store: `<root>/<first-2-hex>/<hash>` plus `<hash>.meta`.
/// Blob writes go through temp-file + rename, so concurrent writers of the same
/// bytes are harmless. Meta merges are serialized per store instance.
class ContentStore {
 public:
  explicit ContentStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Stores `bytes` (idempotent) and merges `meta` into the sibling record. Returns the hash.
  std::string put(std::span<const std::uint8_t> bytes, const ImageMeta& meta);

  bool contains(const std::string& image_id) const;
  /// Throws StoreError when absent or when the stored bytes no longer hash to `image_id`.
  Bytes get(const std::string& image_id) const;
  std::optional<ImageMeta> meta(const std::string& image_id) const;

  std::filesystem::path blob_path(const std::string& image_id) const;
  std::filesystem::path meta_path(const std::string& image_id) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex meta_mutex_;
};

}  // namespace wildharvest
