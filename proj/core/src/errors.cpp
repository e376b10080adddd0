#include "wildharvest/errors.hpp"

namespace wildharvest {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation:
      return 2;
    case ErrorKind::backend_unavailable:
      return 3;
    case ErrorKind::data_integrity:
      return 4;
  }
  return 1;
}

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t offset)
    : Error(ErrorKind::validation,
            what + " (line " + std::to_string(line) + ", offset " + std::to_string(offset) + ")"),
      line_(line),
      offset_(offset) {}

namespace {
std::string join_ids(const std::string& prefix, const std::vector<std::string>& ids) {
  std::string out = prefix + ":";
  const std::size_t shown = ids.size() < 20 ? ids.size() : 20;
  for (std::size_t i = 0; i < shown; ++i) out += " " + ids[i];
  if (shown < ids.size()) out += " ... (" + std::to_string(ids.size()) + " total)";
  return out;
}
}  // namespace

IdListError::IdListError(ErrorKind kind, const std::string& prefix, std::vector<std::string> ids)
    : Error(kind, join_ids(prefix, ids)), ids_(std::move(ids)) {}

}  // namespace wildharvest
