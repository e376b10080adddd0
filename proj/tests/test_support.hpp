#pragma once

#include <filesystem>
#include <string>

#include "wildharvest/hash.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest::testing {

std::filesystem::path source_dir();
std::filesystem::path corpus_dir();
std::filesystem::path cli_path();

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// A w x h PNG cut from a fixture image; distinct (x, y) give distinct bytes.
Bytes png(int w, int h, int x = 0, int y = 0);

DatasetEntry entry(const std::string& tag, int label, Origin origin, const Date& date, int round = 0);

/// Runs the CLI with `args`, capturing stdout into `out`. Returns the exit status.
int run_cli(const std::string& args, std::string* out = nullptr);

}  // namespace wildharvest::testing
