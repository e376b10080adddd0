#include "wildharvest/content_store.hpp"

#include <algorithm>

#include "wildharvest/errors.hpp"
#include "wildharvest/jsonl.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

namespace {

json meta_to_json(const ImageMeta& m) {
  return json{{"format", to_string(m.format)},
              {"width_px", m.width},
              {"height_px", m.height},
              {"source_urls", m.source_urls}};
}

ImageMeta meta_from_json(const json& j) {
  ImageMeta m;
  m.format = parse_image_format(require_string(j, "format"));
  m.width = static_cast<int>(require_int(j, "width_px"));
  m.height = static_cast<int>(require_int(j, "height_px"));
  m.source_urls = string_array(j, "source_urls");
  return m;
}

}  // namespace

ContentStore::ContentStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path ContentStore::blob_path(const std::string& image_id) const {
  if (!is_content_hash(image_id)) throw StoreError("not a content hash: '" + image_id + "'");
  return root_ / image_id.substr(0, 2) / image_id;
}

fs::path ContentStore::meta_path(const std::string& image_id) const {
  fs::path p = blob_path(image_id);
  p += ".meta";
  return p;
}

std::string ContentStore::put(std::span<const std::uint8_t> bytes, const ImageMeta& meta) {
  const std::string id = hash_content(bytes);
  const fs::path blob = blob_path(id);
  if (!fs::exists(blob)) write_bytes_atomic(blob, bytes);

  std::lock_guard lock(meta_mutex_);
  ImageMeta merged = meta;
  if (auto existing = this->meta(id)) {
    merged = *existing;
    merged.source_urls.insert(merged.source_urls.end(), meta.source_urls.begin(), meta.source_urls.end());
  }
  sort_unique(merged.source_urls);
  if (auto existing = this->meta(id); !existing || !(*existing == merged))
    write_file_atomic(meta_path(id), dump_line(meta_to_json(merged)) + "\n");
  return id;
}

bool ContentStore::contains(const std::string& image_id) const {
  return is_content_hash(image_id) && fs::exists(blob_path(image_id));
}

Bytes ContentStore::get(const std::string& image_id) const {
  const fs::path p = blob_path(image_id);
  if (!fs::exists(p)) throw StoreError("image " + image_id + " not in store " + root_.string());
  Bytes b = read_bytes(p);
  if (b.empty() || hash_content(b) != image_id) throw StoreError("store blob " + image_id + " is corrupt");
  return b;
}

std::optional<ImageMeta> ContentStore::meta(const std::string& image_id) const {
  const fs::path p = meta_path(image_id);
  if (!fs::exists(p)) return std::nullopt;
  return meta_from_json(read_json(p));
}

}  // namespace wildharvest
