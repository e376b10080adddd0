#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wildharvest/date.hpp"

namespace wildharvest {

enum class ImageFormat { jpeg, png, webp, other };
enum class Selection { anchor, similarity_expanded, rejected };
enum class Origin { itw, gen, real_pool, replay };
enum class RealSource { news, social };

std::string_view to_string(ImageFormat f);
std::string_view to_string(Selection s);
std::string_view to_string(Origin o);
std::string_view to_string(RealSource s);
ImageFormat parse_image_format(std::string_view s);
Selection parse_selection(std::string_view s);
Origin parse_origin(std::string_view s);
RealSource parse_real_source(std::string_view s);

/// Label space: 0 real, 1 generated.
inline constexpr int kLabelReal = 0;
inline constexpr int kLabelGenerated = 1;

struct Article {
  std::string article_id;
  std::string source_url;
  std::string source_name;
  Date published_at;
  bool date_inferred = false;
  std::string body_text;
  std::vector<std::string> raw_image_urls;

  bool operator==(const Article&) const = default;
};

struct RealImage {
  std::string image_id;
  RealSource source = RealSource::news;
  std::string outlet;
  Date published_at;
  std::string source_url;

  bool operator==(const RealImage&) const = default;
};

struct DescriptionSet {
  std::string article_id;
  std::vector<std::string> captions;
  bool relevant = false;
  /// Image URLs reported by the extraction backend; merged into the article before collection.
  std::vector<std::string> image_urls;

  std::size_t k() const { return captions.size(); }
  bool operator==(const DescriptionSet&) const = default;
};

struct CandidateImage {
  std::string image_id;
  std::string article_id;
  std::string source_url;
  /// Every URL of this article that served these exact bytes, sorted.
  std::vector<std::string> source_urls;
  ImageFormat format = ImageFormat::other;
  int width_px = 0;
  int height_px = 0;
  Timestamp fetched_at;

  bool operator==(const CandidateImage&) const = default;
};

struct ScoredCandidate {
  std::string image_id;
  std::string article_id;
  double anchor_score = 0.0;
  std::vector<double> per_caption_scores;
  Selection selection = Selection::rejected;
  bool score_failed = false;

  bool operator==(const ScoredCandidate&) const = default;
};

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const { return static_cast<long long>(w) * h; }
  bool operator==(const BoundingBox&) const = default;
};

struct Segment {
  std::string segment_id;
  std::string parent_image_id;
  BoundingBox bounding_box;
  double confidence = 0.0;
  bool clipped = false;

  bool operator==(const Segment&) const = default;
};

struct DatasetEntry {
  std::string image_id;
  int label = kLabelGenerated;
  Origin origin = Origin::itw;
  std::optional<std::string> generator_name;
  std::optional<Date> event_date;
  bool date_inferred = false;
  std::optional<std::string> parent_image_id;
  int round_introduced = 0;
  /// Origin of the original source; set on replay entries.
  std::optional<Origin> source_origin;
  /// Sorted, duplicate-free provenance tags (article ids, urls, replay markers).
  std::vector<std::string> provenance;

  bool operator==(const DatasetEntry&) const = default;
};

/// Throws InvariantError when an entry violates the label/origin rules.
void validate_entry(const DatasetEntry& e);

struct DatasetManifest {
  std::string manifest_id;
  int round = 0;
  std::vector<DatasetEntry> entries;
  std::uint64_t seed = 0;
  Timestamp created_at;
  /// Hash of the run configuration that produced this manifest; empty when produced ad hoc.
  std::string config_hash;

  bool operator==(const DatasetManifest&) const = default;
};

/// Sorts entries by image_id and rejects duplicates.
void canonicalize(DatasetManifest& m);

struct ThresholdConfig {
  double tau_anchor = 0.8;
  double tau_sim = 0.75;
  int top_k = 500;
  double seg_threshold = 0.4;
  double acc_threshold = 0.5;
  double replay_rho = 0.05;

  /// Throws ConfigError when a value leaves its range.
  void validate() const;
  bool operator==(const ThresholdConfig&) const = default;
};

/// Serialized reals carry six decimal digits.
double round6(double v);

/// Sorts and removes duplicates in place.
void sort_unique(std::vector<std::string>& v);

}  // namespace wildharvest
