#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wildharvest/backends.hpp"
#include "wildharvest/content_store.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

// --- timeline ------------------------------------------------------------------

struct TimelineConfig {
  int interval_months = 3;
  Date anchor{2025, 1, 1};
  /// Fixed number of rounds; when unset, as many as the latest entry needs.
  std::optional<int> rounds;
};

struct RoundWindow {
  int t = 0;
  Date start;
  /// Inclusive.
  Date end;
  bool operator==(const RoundWindow&) const = default;
};

/// Window t (1-based) spans [anchor + (t-1)·interval months, anchor + t·interval months - 1 day].
RoundWindow window_for(int t, const TimelineConfig& cfg);

/// Round of a date. Dates before the anchor belong to round 1.
int round_of(const Date& d, const TimelineConfig& cfg);

struct TimelinePartition {
  std::vector<RoundWindow> windows;
  /// t -> sorted image ids.
  std::map<int, std::vector<std::string>> assignment;
  std::vector<std::string> warnings;
};

/// Assigns every entry to the window holding its event_date. Throws
/// UndatedEntryError listing undated ids, and TimelineError when a configured
/// round count is too small for the data.
TimelinePartition partition_timeline(const std::vector<DatasetEntry>& entries, const TimelineConfig& cfg);

// --- replay ----------------------------------------------------------------------

enum class ReplayStrategy { stratified, uniform };

struct ReplayBuffer {
  int round = 0;
  double rho = 0.0;
  /// Sorted by image_id, origin=replay, source_origin set.
  std::vector<DatasetEntry> entries;
  std::size_t source_pool_size = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// floor(rho·n), robust to binary representation of rho.
std::size_t replay_size(double rho, std::size_t n);

/// Samples floor(rho·|pool|) entries without replacement. The stratified
/// strategy splits by label proportionally and hands the remainder to the larger
/// stratum. `pool` is deduplicated by image_id first.
ReplayBuffer sample_replay(const std::vector<DatasetEntry>& pool, double rho, std::uint64_t seed, int round,
                           ReplayStrategy strategy = ReplayStrategy::stratified);

/// Non-replay entries of every manifest whose round is strictly below `t`, deduplicated by image_id.
std::vector<DatasetEntry> accumulated_pool(const std::vector<DatasetManifest>& earlier, int t);

// --- assembly --------------------------------------------------------------------

/// Set union by image_id. Entries of the same image merge: the fields of the
/// highest-precedence origin (itw > gen > real_pool > replay) win and
/// provenance is united. Differing labels throw LabelConflictError.
std::vector<DatasetEntry> merge_entries(const std::vector<std::vector<DatasetEntry>>& parts);

/// D_t = itw ∪ gen ∪ replay. New (non-replay) entries get round_introduced = t.
/// Throws LeakageError when an entry belongs to `test_ids`.
DatasetManifest assemble_round(const DatasetManifest& itw, const DatasetManifest& gen, const DatasetManifest& replay,
                               int t, std::uint64_t seed, const std::set<std::string>& test_ids = {},
                               const Timestamp& created_at = {});

/// Stratified by (label, origin): floor(portion·size) per stratum, remainder by largest fractional part.
DatasetManifest subsample_portion(const DatasetManifest& m, double portion, std::uint64_t seed);

// --- rounds and jobs -------------------------------------------------------------

struct UpdateRound {
  int t = 0;
  RoundWindow window;
  std::string itw_manifest;
  std::string gen_manifest;
  std::string replay_manifest;
  /// Empty until assembled.
  std::string assembled_manifest;
  std::uint64_t seed = 0;
  bool operator==(const UpdateRound&) const = default;
};

json to_json(const UpdateRound& r);
UpdateRound update_round_from_json(const json& j);
void write_round_state(const std::filesystem::path& path, const UpdateRound& r);
UpdateRound read_round_state(const std::filesystem::path& path);

struct TrainingJob {
  std::string job_id;
  int round = 0;
  std::string manifest_id;
  std::string manifest_hash;
  std::string detector_backend;
  std::string backend_job_id;
  json hyperparameters = json::object();
  bool operator==(const TrainingJob&) const = default;
};

json to_json(const TrainingJob& j);
TrainingJob training_job_from_json(const json& j);

/// Validates the assembled manifest, submits it and appends the job to `jobs_path`.
/// Job ids are "round-<t>-job-<n>", monotone per round. A rejection throws
/// JobRejected and persists nothing.
TrainingJob emit_training_job(const UpdateRound& round, const DatasetManifest& assembled, TrainerBackend& backend,
                              const json& hyperparameters, const std::filesystem::path& jobs_path,
                              std::vector<std::string>* warnings = nullptr);

// --- generator registry -------------------------------------------------------------

struct GeneratorRow {
  std::string models;
  /// First day of the release month.
  Date release;
  int size = 0;
  int train = 0;
  int test = 0;
  bool explicit_split = false;
  /// Content ids when the row lists image files; split membership follows.
  std::vector<std::string> image_ids;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct RegistryIssue {
  std::size_t row = 0;
  std::string models;
  std::string message;
};

struct GeneratorRegistry {
  std::vector<GeneratorRow> rows;
  /// Rows rejected in lenient mode.
  std::vector<RegistryIssue> issues;

  std::set<std::string> test_ids() const;
  const GeneratorRow* find(const std::string& models) const;
};

enum class RegistryMode { strict, lenient };

/// Default split rule for rows without counts: test = max(1, round(0.1·size)).
int default_test_count(int size);

/// Parses a registry document. Image files resolve against `base_dir` and are
/// stored when `store` is given. Strict mode throws RegistryError on the first
/// bad row; lenient mode records it and skips the row.
GeneratorRegistry registry_from_json(const json& doc, std::uint64_t seed, RegistryMode mode,
                                     const std::filesystem::path& base_dir = {}, ContentStore* store = nullptr);
GeneratorRegistry register_generators(const std::filesystem::path& file, std::uint64_t seed,
                                      RegistryMode mode = RegistryMode::strict, ContentStore* store = nullptr);

json to_json(const GeneratorRegistry& r);

}  // namespace wildharvest
