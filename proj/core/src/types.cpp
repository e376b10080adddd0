#include "wildharvest/types.hpp"

#include <algorithm>
#include <cmath>

#include "wildharvest/errors.hpp"

namespace wildharvest {

std::string_view to_string(ImageFormat f) {
  switch (f) {
    case ImageFormat::jpeg: return "JPEG";
    case ImageFormat::png: return "PNG";
    case ImageFormat::webp: return "WEBP";
    case ImageFormat::other: return "other";
  }
  return "other";
}

std::string_view to_string(Selection s) {
  switch (s) {
    case Selection::anchor: return "anchor";
    case Selection::similarity_expanded: return "similarity_expanded";
    case Selection::rejected: return "rejected";
  }
  return "rejected";
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::itw: return "itw";
    case Origin::gen: return "gen";
    case Origin::real_pool: return "real_pool";
    case Origin::replay: return "replay";
  }
  return "itw";
}

std::string_view to_string(RealSource s) { return s == RealSource::news ? "news" : "social"; }

ImageFormat parse_image_format(std::string_view s) {
  if (s == "JPEG") return ImageFormat::jpeg;
  if (s == "PNG") return ImageFormat::png;
  if (s == "WEBP") return ImageFormat::webp;
  if (s == "other") return ImageFormat::other;
  throw InvariantError("unknown image format '" + std::string(s) + "'");
}

Selection parse_selection(std::string_view s) {
  if (s == "anchor") return Selection::anchor;
  if (s == "similarity_expanded") return Selection::similarity_expanded;
  if (s == "rejected") return Selection::rejected;
  throw InvariantError("unknown selection '" + std::string(s) + "'");
}

Origin parse_origin(std::string_view s) {
  if (s == "itw") return Origin::itw;
  if (s == "gen") return Origin::gen;
  if (s == "real_pool") return Origin::real_pool;
  if (s == "replay") return Origin::replay;
  throw InvariantError("unknown origin '" + std::string(s) + "'");
}

RealSource parse_real_source(std::string_view s) {
  if (s == "news") return RealSource::news;
  if (s == "social") return RealSource::social;
  throw InvariantError("real-image source must be news or social, got '" + std::string(s) + "'");
}

void validate_entry(const DatasetEntry& e) {
  if (e.image_id.empty()) throw InvariantError("entry without image_id");
  if (e.label != kLabelReal && e.label != kLabelGenerated)
    throw InvariantError("entry " + e.image_id + ": label must be 0 or 1");
  if (e.origin == Origin::gen && (!e.generator_name || e.generator_name->empty()))
    throw InvariantError("entry " + e.image_id + ": origin gen requires generator_name");
  if (e.origin == Origin::replay && !e.source_origin)
    throw InvariantError("entry " + e.image_id + ": replay entry without source_origin");
  if (e.source_origin && *e.source_origin == Origin::replay)
    throw InvariantError("entry " + e.image_id + ": source_origin cannot be replay");
  if (e.origin == Origin::real_pool && e.label != kLabelReal)
    throw InvariantError("entry " + e.image_id + ": real-pool entry labeled generated");
}

void canonicalize(DatasetManifest& m) {
  std::sort(m.entries.begin(), m.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_id < b.image_id; });
  auto dup = std::adjacent_find(m.entries.begin(), m.entries.end(),
                                [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_id == b.image_id; });
  if (dup != m.entries.end())
    throw InvariantError("manifest " + m.manifest_id + ": duplicate image_id " + dup->image_id);
}

void ThresholdConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
  };
  unit(tau_anchor, "tau_anchor");
  unit(tau_sim, "tau_sim");
  unit(seg_threshold, "seg_threshold");
  unit(replay_rho, "replay_rho");
  if (!std::isfinite(acc_threshold)) throw ConfigError("acc_threshold must be finite");
  if (top_k <= 0) throw ConfigError("top_k must be positive");
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

void sort_unique(std::vector<std::string>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace wildharvest
