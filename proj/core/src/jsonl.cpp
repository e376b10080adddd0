#include "wildharvest/jsonl.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "wildharvest/errors.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

namespace {
fs::path temp_sibling(const fs::path& path) {
  static std::atomic<unsigned long long> counter{0};
  std::ostringstream name;
  name << "." << path.filename().string() << ".tmp." << ::getpid() << "."
       << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "." << counter++;
  return path.parent_path() / name.str();
}
}  // namespace

void write_bytes_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw StoreError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw StoreError("rename to " + path.string() + " failed: " + ec.message());
  }
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  write_bytes_atomic(path, as_bytes(contents));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Bytes read_bytes(const fs::path& path) {
  const std::string text = read_text(path);
  return Bytes(text.begin(), text.end());
}

std::vector<json> parse_jsonl(std::string_view text) {
  std::vector<json> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      try {
        rows.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw ParseError("malformed JSON record: " + std::string(e.what()), line_no, e.byte);
      }
    }
    pos = end + 1;
  }
  return rows;
}

std::vector<json> read_jsonl(const fs::path& path) { return parse_jsonl(read_text(path)); }

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += dump_line(r);
    out += '\n';
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  write_file_atomic(path, to_jsonl(rows));
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number for the message.
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError(path.string() + ": " + e.what(), line, e.byte);
  }
}

const json& require(const json& obj, const char* key) {
  if (!obj.is_object()) throw InvariantError("expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw InvariantError(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) throw InvariantError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool require_bool(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_boolean()) throw InvariantError(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

double require_number(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number()) throw InvariantError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

long long require_int(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer()) throw InvariantError(std::string("field '") + key + "' must be an integer");
  return v.get<long long>();
}

std::vector<std::string> string_array(const json& obj, const char* key, bool required) {
  if (!obj.is_object()) throw InvariantError("expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw InvariantError(std::string("missing field '") + key + "'");
    return {};
  }
  if (!it->is_array()) throw InvariantError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw InvariantError(std::string("field '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace wildharvest
