#pragma once

#include <filesystem>
#include <string>

#include "wildharvest/jsonl.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

inline constexpr const char* kManifestFormat = "wildharvest.manifest";
inline constexpr int kManifestVersion = 1;

json entry_to_json(const DatasetEntry& e);
DatasetEntry entry_from_json(const json& j);

/// Header line followed by one entry per line, entries sorted by image_id.
/// Throws InvariantError on duplicate image_ids or invalid entries.
std::string serialize_manifest(const DatasetManifest& m);

/// Throws ParseError (with line/offset) on malformed input.
DatasetManifest deserialize_manifest(std::string_view text);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Hash of the canonical serialization.
std::string manifest_hash(const DatasetManifest& m);

}  // namespace wildharvest
