#include "test_support.hpp"

#include <atomic>
#include <cstdlib>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include "wildharvest/image_ops.hpp"
#include "wildharvest/jsonl.hpp"

namespace fs = std::filesystem;

namespace wildharvest::testing {

namespace {
// Library warnings would drown the test report.
const bool quiet = [] {
  spdlog::set_level(spdlog::level::err);
  return true;
}();
}  // namespace

fs::path source_dir() { return WILDHARVEST_SOURCE_DIR; }
fs::path corpus_dir() { return source_dir() / "fixtures" / "corpus_v1"; }
fs::path cli_path() { return WILDHARVEST_CLI; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("wildharvest-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Bytes png(int w, int h, int x, int y) {
  static const Bytes source = read_bytes(corpus_dir() / "articles" / "images" / "fc00-0.png");
  return crop_to_png(source, BoundingBox{x, y, w, h});
}

DatasetEntry entry(const std::string& tag, int label, Origin origin, const Date& date, int round) {
  DatasetEntry e;
  e.image_id = sha256_hex(tag);
  e.label = label;
  e.origin = origin;
  e.event_date = date;
  e.round_introduced = round;
  e.provenance = {"test:" + tag};
  if (origin == Origin::gen) e.generator_name = "TestGen";
  return e;
}

int run_cli(const std::string& args, std::string* out) {
  TempDir capture;
  const fs::path file = capture / "stdout";
  const std::string cmd = "\"" + cli_path().string() + "\" --log-level off " + args + " > \"" + file.string() + "\"";
  const int status = std::system(cmd.c_str());
  if (out) *out = fs::exists(file) ? read_text(file) : std::string{};
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace wildharvest::testing
