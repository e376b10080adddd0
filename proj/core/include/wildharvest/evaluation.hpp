#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wildharvest/jsonl.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

/// One detector output: score is P(generated).
struct ScoreRecord {
  std::string image_id;
  double score = 0.0;
  int label = 0;
  std::string dataset;
  std::optional<std::string> generator;
  std::optional<int> task;
  bool operator==(const ScoreRecord&) const = default;
};

json to_json(const ScoreRecord& r);
ScoreRecord score_record_from_json(const json& j);
/// Throws ParseError naming the line of any invalid record.
std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path);

/// Mann-Whitney AUC by midranks: P(pos > neg) + 0.5·P(tie). Throws SingleClassError.
double auc(const std::vector<double>& positives, const std::vector<double>& negatives);
double auc(const std::vector<ScoreRecord>& records);

/// Fraction with (score >= threshold) == (label == 1). Throws InvariantError on empty input.
double acc(const std::vector<ScoreRecord>& records, double threshold = 0.5);

struct Metrics {
  /// Unset when the group holds a single class.
  std::optional<double> auc;
  double acc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(const std::vector<ScoreRecord>& records, double threshold = 0.5);

struct Groupings {
  bool dataset = true;
  bool generator = true;
  bool task = true;
};

/// Parses "dataset,generator,task" style lists.
Groupings parse_groupings(const std::string& spec);

enum class Metric { auc, acc };

struct Delta {
  int task_a = 0;
  int task_b = 0;
  std::string dataset;
  /// Percentage points, metric(task_b) - metric(task_a).
  std::optional<double> auc_pp;
  double acc_pp = 0.0;
};

struct Average {
  std::optional<double> auc;
  std::optional<double> acc;
};

struct EvaluationReport {
  double threshold = 0.5;
  /// With task ids present these describe the latest task.
  std::map<std::string, Metrics> per_dataset;
  Average average;
  std::map<std::string, Metrics> per_generator;
  std::map<int, std::map<std::string, Metrics>> per_task;
  std::map<int, Average> per_task_average;
  std::vector<Delta> deltas;
  std::vector<std::string> warnings;
};

EvaluationReport build_report(const std::vector<ScoreRecord>& records, const Groupings& groupings = {},
                              double threshold = 0.5);

/// metric(task_b) - metric(task_a) on `dataset`, in percentage points. Throws MissingCellError.
double forgetting_delta(const EvaluationReport& report, int task_a, int task_b, const std::string& dataset,
                        Metric metric = Metric::auc);

/// Percentages with two decimals.
json to_json(const EvaluationReport& r);
/// Plain-text tables: datasets as columns with AUC / ACC cells and an AVG column.
std::string render_table(const EvaluationReport& r);

// --- validation precision ----------------------------------------------------------

struct PrecisionResult {
  std::size_t population = 0;
  std::size_t sampled_n = 0;
  std::size_t correct = 0;
  double precision = 0.0;
  std::vector<std::string> sample;
};

/// Seeded sample of round(fraction·n) ids from the generated-labeled entries, sorted.
std::vector<std::string> sample_for_validation(const DatasetManifest& m, double fraction, std::uint64_t seed);

/// image_id -> correct? Rows look like {"image_id": ..., "verdict": "correct"|"incorrect"}.
std::map<std::string, bool> read_annotations(const std::filesystem::path& path);

/// Precision = correct / sampled over the seeded sample. A segment without its own
/// annotation takes its parent's. Throws IncompleteAnnotationError listing ids.
PrecisionResult validation_precision(const DatasetManifest& m, double fraction, std::uint64_t seed,
                                     const std::map<std::string, bool>& annotations);

/// One blank row per sampled entry, for manual annotation.
std::vector<json> annotation_worksheet(const DatasetManifest& m, const std::vector<std::string>& sample);

}  // namespace wildharvest
