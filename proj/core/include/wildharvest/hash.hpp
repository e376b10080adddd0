#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wildharvest {

using Bytes = std::vector<std::uint8_t>;

/// Content hash of raw stored bytes: lowercase hex SHA-256 (64 chars).
/// Throws EmptyContent for an empty input.
std::string hash_content(std::span<const std::uint8_t> bytes);

/// SHA-256 of arbitrary text (empty allowed). Used for config and file fingerprints.
std::string sha256_hex(std::string_view text);

/// Raw 32-byte digest.
std::vector<std::uint8_t> sha256_raw(std::span<const std::uint8_t> bytes);

/// Decodes a lowercase/uppercase hex string; throws InvariantError on bad input.
Bytes hex_decode(std::string_view hex);

bool is_content_hash(std::string_view s);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace wildharvest
