#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wildharvest/backends.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

/// A versioned instruction prompt with `{name}` placeholders.
struct PromptTemplate {
  std::string template_id;  // "p1" or "p2"
  std::string version;
  std::string text;

  std::string ref() const { return template_id + "@" + version; }
  /// Substitutes every `{name}`; unknown placeholders are left alone.
  std::string render(const std::map<std::string, std::string>& values) const;
};

/// Validates the placeholder contract: p1 needs `{article}`, p2 needs `{caption}`.
PromptTemplate make_template(const std::string& template_id, const std::string& version, const std::string& text);

/// Loads `<dir>/<id>@<version>.txt` for a reference such as "p1@v1". Leading lines
/// starting with '#' are metadata and are not part of the prompt.
PromptTemplate load_template(const std::filesystem::path& dir, const std::string& ref);

inline constexpr std::size_t kDefaultWordBudget = 8000;

/// Keeps at most `budget` whitespace-separated words: the first three quarters
/// from the head, the rest from the tail, joined by " ... ".
std::string truncate_words(const std::string& text, std::size_t budget);

/// Strict parse of `{relevant, captions[], image_urls[]}`; anything else throws ExtractionSchemaError.
DescriptionSet parse_extraction_response(const std::string& article_id, const json& response);

/// Throws ExtractionSchemaError for schema violations and BackendUnavailable when the backend is unreachable.
DescriptionSet extract_descriptions(const Article& a, const PromptTemplate& p1, TextModelBackend& g,
                                    std::size_t word_budget = kDefaultWordBudget);

struct ExtractionRun {
  /// Sorted by article_id; quarantined articles are absent.
  std::vector<DescriptionSet> descriptions;
  /// article_id -> reason.
  std::map<std::string, std::string> quarantined;
};

/// Extracts every article with bounded backend concurrency. Schema violations
/// quarantine the article; an unreachable backend aborts the run.
ExtractionRun extract_corpus(const std::vector<Article>& articles, const PromptTemplate& p1, TextModelBackend& g,
                             std::size_t word_budget = kDefaultWordBudget);

/// The article with the backend-reported image URLs appended (first occurrence kept).
Article merge_image_urls(Article a, const DescriptionSet& d);

}  // namespace wildharvest
