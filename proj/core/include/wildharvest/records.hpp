#pragma once

#include "wildharvest/errors.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

// Line-record encodings of the pipeline's intermediate artifacts. Field names
// are documented in docs/formats.md and frozen by golden tests.

json to_json(const Article& a);
Article article_from_json(const json& j);

json to_json(const DescriptionSet& d);
DescriptionSet description_set_from_json(const json& j);

json to_json(const CandidateImage& c);
CandidateImage candidate_from_json(const json& j);

json to_json(const ScoredCandidate& s);
ScoredCandidate scored_from_json(const json& j);

json to_json(const Segment& s);
Segment segment_from_json(const json& j);

json to_json(const RealImage& r);
RealImage real_image_from_json(const json& j);

json to_json(const ThresholdConfig& t);
/// Missing keys keep their defaults; the result is validated.
ThresholdConfig thresholds_from_json(const json& j);

/// Parses every line of a record file with `parse`, rethrowing failures as ParseError with the line number.
template <typename T, typename F>
std::vector<T> read_records(const std::filesystem::path& path, F parse) {
  const auto rows = read_jsonl(path);
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(parse(rows[i]));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path.string() + ": " + e.what(), i + 1);
    }
  }
  return out;
}

template <typename T>
void write_records(const std::filesystem::path& path, const std::vector<T>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& item : items) rows.push_back(to_json(item));
  write_jsonl(path, rows);
}

}  // namespace wildharvest
