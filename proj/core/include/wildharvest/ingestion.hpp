#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wildharvest/content_store.hpp"
#include "wildharvest/http.hpp"
#include "wildharvest/image_probe.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

enum class AdapterKind { factcheck_api, web_scrape, news_api, social_feed, fixture };

std::string_view to_string(AdapterKind k);
AdapterKind parse_adapter_kind(std::string_view s);

struct SourceAdapter {
  std::string adapter_name;
  AdapterKind kind = AdapterKind::fixture;
  /// URL for network adapters, directory for fixtures.
  std::string endpoint;
  /// Name of the environment variable holding the credential; defaults to WILDHARVEST_<NAME>_TOKEN.
  std::string auth;
  std::string pagination_token_field = "next_page_token";
  std::string records_field = "records";
  double rate_limit_rps = 0.0;
  std::size_t parallelism = 4;
  /// Real-pool accounting class for fixture adapters (news_api and social_feed imply it).
  std::optional<RealSource> real_source;
  RetryPolicy retry;
};

SourceAdapter adapter_from_json(const std::string& name, const json& j);

/// news_api and social_feed fix the accounting class; other kinds use the declared one.
std::optional<RealSource> implied_real_source(const SourceAdapter& a);

struct DateRange {
  Date from;
  Date to;
  bool contains(const Date& d) const { return from <= d && d <= to; }
};

struct ListQuery {
  std::string text;
  std::vector<std::string> exclude_terms;
  DateRange range;
};

enum class FetchStatus { ok, not_found, failed };

struct FetchResult {
  FetchStatus status = FetchStatus::failed;
  Bytes bytes;
  std::string message;
};

/// The one narrow interface every article/image source implements.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual const SourceAdapter& adapter() const = 0;
  /// Records matching `q`. Throws SourceUnavailable when the source cannot be reached.
  virtual std::vector<json> list(const ListQuery& q) = 0;
  virtual FetchResult fetch(const std::string& url) = 0;
  /// Extra image URLs found by visiting the article itself (scrapers only).
  virtual std::vector<std::string> discover_image_urls(const Article&) { return {}; }
};

/// Fixture adapters resolve `endpoint` relative to `base_dir`.
std::unique_ptr<RecordSource> open_source(const SourceAdapter& adapter, const std::filesystem::path& base_dir = {});

/// Ingest guards: at most 64 MiB, at least 32x32 px.
inline constexpr std::size_t kMaxImageBytes = 64ull * 1024 * 1024;
inline constexpr int kMinImageSide = 32;

/// Default exclusion terms applied to real-pool queries.
const std::vector<std::string>& default_ai_exclusion_terms();

struct ArticleFetch {
  std::vector<Article> articles;
  /// One message per skipped malformed record.
  std::vector<std::string> payload_errors;
};

/// Articles in [from, to], deduplicated by source_url, sorted by (published_at, article_id).
/// Records without a publication date take `as_of`'s date and are flagged date_inferred.
ArticleFetch fetch_articles(RecordSource& source, const std::string& query, const DateRange& range,
                            const Timestamp& as_of);

struct SkipRecord {
  std::string url;
  std::string reason;
  bool operator==(const SkipRecord&) const = default;
};

struct CandidateCollection {
  std::vector<CandidateImage> candidates;
  std::vector<SkipRecord> skips;
};

/// Fetches every image URL of the article (plus scraper discoveries), stores the
/// bytes content-addressed and returns candidates sorted by image_id. Individual
/// failures become skip records. Throws EmptyCandidateSet when nothing was stored.
CandidateCollection collect_candidate_images(const Article& article, RecordSource& source, ContentStore& store,
                                             const Timestamp& fetched_at);

struct RealPool {
  std::vector<RealImage> images;
  std::map<std::string, int> per_source_counts;
  std::map<std::string, int> per_adapter_counts;
  std::vector<SkipRecord> skips;
  std::vector<std::string> warnings;
  int duplicates_dropped = 0;
};

/// Collects the real-image pool from all adapters, deduplicated by content hash
/// (first occurrence in adapter order wins). Throws SourceUnavailable only when
/// every adapter fails.
RealPool fetch_real_pool(const std::vector<RecordSource*>& sources, const DateRange& range, ContentStore& store,
                         const std::vector<std::string>& exclude_terms = default_ai_exclusion_terms());

/// `src` attributes of every <img> tag in `html`, resolved against `base_url`, in document order without repeats.
std::vector<std::string> extract_img_sources(const std::string& html, const std::string& base_url);

/// Validates fetched bytes against the ingest guards. Returns the probe or a skip reason.
std::optional<ImageInfo> check_image(std::span<const std::uint8_t> bytes, std::string& reason);

}  // namespace wildharvest
