#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildharvest/hash.hpp"

namespace wildharvest {

using json = nlohmann::json;

/// Compact single-line dump; object keys come out sorted.
std::string dump_line(const json& j);

/// Writes via a uniquely named temp file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

std::string read_text(const std::filesystem::path& path);
Bytes read_bytes(const std::filesystem::path& path);

/// One JSON value per non-blank line. Throws ParseError with 1-based line and byte offset.
std::vector<json> parse_jsonl(std::string_view text);
std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& rows);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

json read_json(const std::filesystem::path& path);

/// Strict accessors used by record parsers; throw InvariantError naming the field.
const json& require(const json& obj, const char* key);
std::string require_string(const json& obj, const char* key);
bool require_bool(const json& obj, const char* key);
double require_number(const json& obj, const char* key);
long long require_int(const json& obj, const char* key);
std::vector<std::string> string_array(const json& obj, const char* key, bool required = true);

}  // namespace wildharvest
