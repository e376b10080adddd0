#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wildharvest/backends.hpp"
#include "wildharvest/ingestion.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/pairing.hpp"
#include "wildharvest/scheduler.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

inline constexpr const char* kConfigFormat = "wildharvest.config";

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

/// "all" or a comma-separated subset; returned in execution order. Throws ConfigError on unknown names.
std::vector<std::string> parse_stages(const std::string& spec);

struct ConfigOverrides {
  std::optional<std::filesystem::path> store;
  std::optional<std::filesystem::path> work;
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;
};

struct RunConfig {
  /// The document as loaded (after overrides of thresholds and seeds).
  json raw;
  std::filesystem::path base_dir;
  /// sha256 of the canonical config without paths.store / paths.work.
  std::string config_hash;
  Timestamp as_of;

  ThresholdConfig thresholds;
  std::map<std::string, SourceAdapter> adapters;
  std::string article_adapter;
  std::string image_adapter;
  std::vector<std::string> real_pool_adapters;
  std::string query;
  DateRange date_range;
  DateRange real_pool_range;
  std::vector<std::string> exclude_terms;

  std::map<std::string, BackendDescriptor> backends;
  /// Stage -> backend name.
  std::map<std::string, std::string> stage_backends;
  std::map<std::string, std::uint64_t> seeds;

  std::filesystem::path store_dir;
  std::filesystem::path work_dir;
  std::filesystem::path templates_dir;
  std::string p1_ref = "p1@v1";
  std::string p2_ref = "p2@v1";
  std::size_t word_budget = 8000;

  PairingConfig pairing;
  bool pair_segments = true;
  bool keep_originals = true;

  TimelineConfig timeline;
  ReplayStrategy replay_strategy = ReplayStrategy::stratified;
  std::optional<std::filesystem::path> pretraining_manifest;
  std::optional<std::filesystem::path> registry_file;
  RegistryMode registry_mode = RegistryMode::strict;
  json hyperparameters = json::object();

  std::optional<std::filesystem::path> scores_file;
  std::string groupings = "dataset,generator,task";
  std::optional<std::filesystem::path> annotations_file;
  double precision_fraction = 0.104;

  /// Seed for a stage: seeds[stage], else a value derived from seeds["base"].
  std::uint64_t seed(const std::string& stage) const;
  /// Throws ConfigError when the stage has no backend.
  const BackendDescriptor& backend_for(const std::string& stage) const;
};

/// Canonical hash of a config document, ignoring paths.store and paths.work.
std::string config_hash(const json& doc);

/// Loads and validates a config file. Relative paths inside the file resolve
/// against its directory; override paths are used as given. WILDHARVEST_STORE
/// replaces paths.store unless an override is present.
RunConfig load_run_config(const std::filesystem::path& file, const ConfigOverrides& overrides = {});
RunConfig run_config_from_json(json doc, const std::filesystem::path& base_dir, const ConfigOverrides& overrides = {});

/// Exclusive lock on a store directory held for the lifetime of the object.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& store_dir);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct RunOptions {
  std::vector<std::string> stages;
  bool force = false;
};

struct StageReport {
  std::string stage;
  /// "done" or "cache_hit".
  std::string status;
  json summary;
};

struct RunResult {
  std::vector<StageReport> stages;
  int executed = 0;
  int cache_hits = 0;
};

/// Runs the requested stages. Each stage is recorded in `<work>/ledger.jsonl`;
/// a stage whose fingerprint (config hash + input file hashes) matches its last
/// completed record and whose outputs are intact is skipped. Outputs produced
/// under another config throw StaleCacheError unless `force` is set.
RunResult run_pipeline(const RunConfig& cfg, const RunOptions& opts);

/// Paths of the standard work-directory artifacts.
namespace work_files {
inline constexpr const char* kLedger = "ledger.jsonl";
inline constexpr const char* kArticles = "articles.jsonl";
inline constexpr const char* kRealPool = "real_pool.jsonl";
inline constexpr const char* kDescriptions = "descriptions.jsonl";
inline constexpr const char* kQuarantine = "quarantine.jsonl";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kScored = "scored.jsonl";
inline constexpr const char* kSelection = "selection.jsonl";
inline constexpr const char* kFinal = "final.jsonl";
inline constexpr const char* kSegments = "segments.jsonl";
inline constexpr const char* kRegistry = "registry.json";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kTimeline = "timeline.json";
inline constexpr const char* kItwFakes = "manifests/itw_fakes.manifest.jsonl";
inline constexpr const char* kJobs = "jobs.jsonl";
inline constexpr const char* kTrainerCalls = "trainer_calls.jsonl";
inline constexpr const char* kReportJson = "eval/report.json";
inline constexpr const char* kReportText = "eval/report.txt";
inline constexpr const char* kPrecision = "eval/precision.json";
inline constexpr const char* kWorksheet = "eval/annotation_worksheet.jsonl";
std::string round_manifest(int t);
std::string round_state(int t);
std::string component_manifest(int t, const std::string& component);
}  // namespace work_files

}  // namespace wildharvest
