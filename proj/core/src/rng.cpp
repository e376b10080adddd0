#include "wildharvest/rng.hpp"

#include <string>

#include "wildharvest/hash.hpp"

namespace wildharvest {

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  const std::string text = std::to_string(base) + "/" + std::string(label);
  const auto digest = sha256_raw(as_bytes(text));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = out << 8 | digest[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace wildharvest
