#include "wildharvest/manifest.hpp"

#include "wildharvest/errors.hpp"

namespace wildharvest {

json entry_to_json(const DatasetEntry& e) {
  json j{{"image_id", e.image_id},
         {"label", e.label},
         {"origin", to_string(e.origin)},
         {"round_introduced", e.round_introduced},
         {"provenance", e.provenance}};
  if (e.generator_name) j["generator_name"] = *e.generator_name;
  if (e.event_date) j["event_date"] = e.event_date->to_string();
  if (e.date_inferred) j["date_inferred"] = true;
  if (e.parent_image_id) j["parent_image_id"] = *e.parent_image_id;
  if (e.source_origin) j["source_origin"] = to_string(*e.source_origin);
  return j;
}

DatasetEntry entry_from_json(const json& j) {
  static const char* known[] = {"image_id",      "label",           "origin",        "round_introduced",
                                "provenance",    "generator_name",  "event_date",    "date_inferred",
                                "parent_image_id", "source_origin"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw InvariantError("unknown entry field '" + it.key() + "'");
  }
  DatasetEntry e;
  e.image_id = require_string(j, "image_id");
  e.label = static_cast<int>(require_int(j, "label"));
  e.origin = parse_origin(require_string(j, "origin"));
  e.round_introduced = static_cast<int>(require_int(j, "round_introduced"));
  e.provenance = string_array(j, "provenance");
  if (j.contains("generator_name")) e.generator_name = require_string(j, "generator_name");
  if (j.contains("event_date")) e.event_date = Date::parse(require_string(j, "event_date"));
  if (j.contains("date_inferred")) e.date_inferred = require_bool(j, "date_inferred");
  if (j.contains("parent_image_id")) e.parent_image_id = require_string(j, "parent_image_id");
  if (j.contains("source_origin")) e.source_origin = parse_origin(require_string(j, "source_origin"));
  validate_entry(e);
  return e;
}

std::string serialize_manifest(const DatasetManifest& input) {
  DatasetManifest m = input;
  canonicalize(m);
  json header{{"format", kManifestFormat},
              {"version", kManifestVersion},
              {"manifest_id", m.manifest_id},
              {"round", m.round},
              {"seed", m.seed},
              {"created_at", m.created_at.to_string()},
              {"config_hash", m.config_hash},
              {"entry_count", m.entries.size()}};
  std::string out = dump_line(header) + "\n";
  for (auto& e : m.entries) {
    validate_entry(e);
    sort_unique(e.provenance);
    out += dump_line(entry_to_json(e));
    out += '\n';
  }
  return out;
}

DatasetManifest deserialize_manifest(std::string_view text) {
  const auto rows = parse_jsonl(text);
  if (rows.empty()) throw ParseError("empty manifest", 1);
  DatasetManifest m;
  const json& h = rows.front();
  try {
    if (require_string(h, "format") != kManifestFormat) throw InvariantError("not a manifest header");
    if (require_int(h, "version") != kManifestVersion) throw InvariantError("unsupported manifest version");
    m.manifest_id = require_string(h, "manifest_id");
    m.round = static_cast<int>(require_int(h, "round"));
    const json& seed = require(h, "seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw InvariantError("seed must be an integer");
    m.seed = seed.get<std::uint64_t>();
    m.created_at = Timestamp::parse(require_string(h, "created_at"));
    m.config_hash = require_string(h, "config_hash");
    const auto count = require_int(h, "entry_count");
    if (count < 0 || static_cast<std::size_t>(count) != rows.size() - 1)
      throw InvariantError("entry_count does not match the number of entry lines");
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("manifest header: ") + e.what(), 1);
  }
  // Blank lines are skipped by parse_jsonl, so line numbers here assume the canonical layout.
  for (std::size_t i = 1; i < rows.size(); ++i) {
    try {
      m.entries.push_back(entry_from_json(rows[i]));
    } catch (const Error& e) {
      throw ParseError(std::string("manifest entry: ") + e.what(), i + 1);
    }
  }
  try {
    canonicalize(m);
  } catch (const Error& e) {
    throw ParseError(e.what(), 0);
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_file_atomic(path, serialize_manifest(m));
}

DatasetManifest read_manifest(const std::filesystem::path& path) { return deserialize_manifest(read_text(path)); }

std::string manifest_hash(const DatasetManifest& m) { return sha256_hex(serialize_manifest(m)); }

}  // namespace wildharvest
