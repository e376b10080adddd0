#include "wildharvest/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <semaphore>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/image_probe.hpp"
#include "wildharvest/parallel.hpp"
#include "wildharvest/robots.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

std::string_view to_string(AdapterKind k) {
  switch (k) {
    case AdapterKind::factcheck_api: return "factcheck_api";
    case AdapterKind::web_scrape: return "web_scrape";
    case AdapterKind::news_api: return "news_api";
    case AdapterKind::social_feed: return "social_feed";
    case AdapterKind::fixture: return "fixture";
  }
  return "fixture";
}

AdapterKind parse_adapter_kind(std::string_view s) {
  for (auto k : {AdapterKind::factcheck_api, AdapterKind::web_scrape, AdapterKind::news_api,
                 AdapterKind::social_feed, AdapterKind::fixture})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown adapter kind '" + std::string(s) + "'");
}

std::optional<RealSource> implied_real_source(const SourceAdapter& a) {
  if (a.kind == AdapterKind::news_api) return RealSource::news;
  if (a.kind == AdapterKind::social_feed) return RealSource::social;
  return a.real_source;
}

SourceAdapter adapter_from_json(const std::string& name, const json& j) {
  if (!j.is_object()) throw ConfigError("adapter " + name + " must be an object");
  SourceAdapter a;
  a.adapter_name = name;
  try {
    a.kind = parse_adapter_kind(require_string(j, "kind"));
    a.endpoint = require_string(j, "endpoint");
  } catch (const InvariantError& e) {
    throw ConfigError("adapter " + name + ": " + e.what());
  }
  a.auth = j.value("auth", std::string{});
  a.pagination_token_field = j.value("pagination_token_field", a.pagination_token_field);
  a.records_field = j.value("records_field", a.records_field);
  a.rate_limit_rps = j.value("rate_limit_rps", 0.0);
  a.parallelism = j.value("parallelism", std::size_t{4});
  if (a.parallelism == 0) throw ConfigError("adapter " + name + ": parallelism must be positive");
  if (j.contains("source")) a.real_source = parse_real_source(j["source"].get<std::string>());
  if (auto implied = implied_real_source(a)) a.real_source = implied;
  if (j.contains("retry")) {
    const json& r = j["retry"];
    a.retry.attempts = r.value("attempts", a.retry.attempts);
    a.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", 1000));
    a.retry.multiplier = r.value("multiplier", a.retry.multiplier);
  }
  return a;
}

const std::vector<std::string>& default_ai_exclusion_terms() {
  static const std::vector<std::string> terms = {"ai-generated", "ai generated", "artificial intelligence",
                                                 "deepfake",     "midjourney",   "dall-e",
                                                 "stable diffusion", "synthetic image"};
  return terms;
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool mentions_any(const json& record, const std::vector<std::string>& terms) {
  if (terms.empty()) return false;
  std::string text;
  for (const char* key : {"title", "body_text", "caption", "description"})
    if (record.contains(key) && record[key].is_string()) text += lower(record[key].get<std::string>()) + "\n";
  for (const auto& t : terms)
    if (!t.empty() && text.find(lower(t)) != std::string::npos) return true;
  return false;
}

std::string last_path_segment(const std::string& url) {
  std::string path = url;
  if (auto q = path.find_first_of("?#"); q != std::string::npos) path.erase(q);
  if (auto slash = path.rfind('/'); slash != std::string::npos) path = path.substr(slash + 1);
  return path;
}

/// Offline adapter over a directory: fixture.json + a record file + an image directory.
class FixtureSource final : public RecordSource {
 public:
  FixtureSource(SourceAdapter adapter, fs::path dir) : adapter_(std::move(adapter)), dir_(std::move(dir)) {
    const fs::path header_path = dir_ / "fixture.json";
    if (!fs::exists(header_path)) throw SourceUnavailable("fixture " + dir_.string() + " has no fixture.json");
    const json header = read_json(header_path);
    if (header.value("format", std::string{}) != "wildharvest.fixture")
      throw AdapterPayloadError("fixture " + dir_.string() + ": not a wildharvest fixture");
    if (header.value("version", 0) != 1) throw AdapterPayloadError("fixture " + dir_.string() + ": unsupported version");
    records_path_ = dir_ / header.value("records", std::string{"records.jsonl"});
    images_dir_ = dir_ / header.value("images", std::string{"images"});
  }

  const SourceAdapter& adapter() const override { return adapter_; }

  std::vector<json> list(const ListQuery& q) override {
    std::vector<json> out;
    for (auto& rec : read_jsonl(records_path_)) {
      if (mentions_any(rec, q.exclude_terms)) continue;
      if (rec.is_object() && rec.contains("published_at") && rec["published_at"].is_string()) {
        if (auto d = Date::try_parse(rec["published_at"].get<std::string>()); d && !q.range.contains(*d)) continue;
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

  FetchResult fetch(const std::string& url) override {
    const std::string name = last_path_segment(url);
    const fs::path p = images_dir_ / name;
    if (name.empty() || name == "." || name == ".." || !fs::is_regular_file(p))
      return {FetchStatus::not_found, {}, "404 " + url};
    return {FetchStatus::ok, read_bytes(p), {}};
  }

 private:
  SourceAdapter adapter_;
  fs::path dir_;
  fs::path records_path_;
  fs::path images_dir_;
};

/// Paginated JSON API: GET endpoint?q=&from=&to=&exclude=&<token-field>=...
class HttpSource : public RecordSource {
 public:
  explicit HttpSource(SourceAdapter adapter)
      : adapter_(std::move(adapter)),
        limiter_(adapter_.rate_limit_rps),
        in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, adapter_.parallelism))) {
    std::optional<std::string> token;
    if (!adapter_.auth.empty()) {
      if (const char* v = std::getenv(adapter_.auth.c_str()); v && *v) token = v;
    } else {
      token = credential_from_env(adapter_.adapter_name);
    }
    client_ = std::make_unique<HttpClient>(adapter_.retry, token);
    client_->set_rate_limiter(&limiter_);
  }

  const SourceAdapter& adapter() const override { return adapter_; }
  HttpClient& client() { return *client_; }

  std::vector<json> list(const ListQuery& q) override {
    std::vector<json> out;
    std::string token;
    for (int page = 0; page < 10000; ++page) {
      std::map<std::string, std::string> params{
          {"q", q.text}, {"from", q.range.from.to_string()}, {"to", q.range.to.to_string()}};
      if (!q.exclude_terms.empty()) {
        std::string joined;
        for (const auto& t : q.exclude_terms) joined += (joined.empty() ? "" : ",") + t;
        params["exclude"] = joined;
      }
      if (!token.empty()) params[adapter_.pagination_token_field] = token;
      HttpResponse res;
      try {
        res = guarded_get(with_query(adapter_.endpoint, params));
      } catch (const FetchError& e) {
        throw SourceUnavailable(adapter_.adapter_name + ": " + e.what());
      }
      if (res.status != 200)
        throw SourceUnavailable(adapter_.adapter_name + ": listing returned HTTP " + std::to_string(res.status));
      json body;
      try {
        body = json::parse(res.body);
      } catch (const json::parse_error& e) {
        throw AdapterPayloadError(adapter_.adapter_name + ": listing page is not JSON: " + e.what());
      }
      if (!body.is_object() || !body.contains(adapter_.records_field) || !body[adapter_.records_field].is_array())
        throw AdapterPayloadError(adapter_.adapter_name + ": listing page lacks '" + adapter_.records_field + "'");
      for (auto& rec : body[adapter_.records_field]) out.push_back(std::move(rec));
      const auto it = body.find(adapter_.pagination_token_field);
      if (it == body.end() || !it->is_string() || it->get<std::string>().empty()) return out;
      token = it->get<std::string>();
    }
    throw AdapterPayloadError(adapter_.adapter_name + ": pagination did not terminate");
  }

  FetchResult fetch(const std::string& url) override {
    try {
      HttpResponse res = guarded_get(url);
      if (res.status == 200) return {FetchStatus::ok, Bytes(res.body.begin(), res.body.end()), {}};
      if (res.status == 404 || res.status == 410) return {FetchStatus::not_found, {}, "HTTP " + std::to_string(res.status)};
      return {FetchStatus::failed, {}, "HTTP " + std::to_string(res.status)};
    } catch (const Error& e) {
      return {FetchStatus::failed, {}, e.what()};
    }
  }

 protected:
  HttpResponse guarded_get(const std::string& url) {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{in_flight_};
    return client_->get(url);
  }

 private:
  SourceAdapter adapter_;
  RateLimiter limiter_;
  std::counting_semaphore<> in_flight_;
  std::unique_ptr<HttpClient> client_;
};

/// Built-in scraper: visits article pages, collects <img src>, honors robots.txt.
class ScrapeSource final : public HttpSource {
 public:
  explicit ScrapeSource(SourceAdapter adapter) : HttpSource(std::move(adapter)) {}

  std::vector<json> list(const ListQuery&) override {
    throw ConfigError(adapter().adapter_name + ": web_scrape adapters cannot list records; use them for image collection");
  }

  FetchResult fetch(const std::string& url) override {
    if (!allowed(url)) return {FetchStatus::failed, {}, "disallowed by robots.txt"};
    return HttpSource::fetch(url);
  }

  std::vector<std::string> discover_image_urls(const Article& a) override {
    if (a.source_url.find("://") == std::string::npos || !allowed(a.source_url)) return {};
    FetchResult page = HttpSource::fetch(a.source_url);
    if (page.status != FetchStatus::ok) return {};
    return extract_img_sources(std::string(page.bytes.begin(), page.bytes.end()), a.source_url);
  }

 private:
  bool allowed(const std::string& url) {
    Url u;
    try {
      u = Url::parse(url);
    } catch (const Error&) {
      return false;
    }
    const std::string origin = u.origin();
    RobotsRules rules;
    {
      std::lock_guard lock(mutex_);
      auto it = robots_.find(origin);
      if (it != robots_.end()) return it->second.allows(u.target);
    }
    FetchResult r = HttpSource::fetch(origin + "/robots.txt");
    if (r.status == FetchStatus::ok) rules = RobotsRules::parse(std::string(r.bytes.begin(), r.bytes.end()), "wildharvest");
    std::lock_guard lock(mutex_);
    auto [it, inserted] = robots_.emplace(origin, std::move(rules));
    return it->second.allows(u.target);
  }

  std::mutex mutex_;
  std::unordered_map<std::string, RobotsRules> robots_;
};

}  // namespace

std::unique_ptr<RecordSource> open_source(const SourceAdapter& adapter, const fs::path& base_dir) {
  switch (adapter.kind) {
    case AdapterKind::fixture: {
      fs::path dir = adapter.endpoint;
      if (adapter.endpoint.rfind("fixture://", 0) == 0) dir = adapter.endpoint.substr(10);
      if (dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
      return std::make_unique<FixtureSource>(adapter, dir);
    }
    case AdapterKind::web_scrape:
      return std::make_unique<ScrapeSource>(adapter);
    case AdapterKind::factcheck_api:
    case AdapterKind::news_api:
    case AdapterKind::social_feed:
      return std::make_unique<HttpSource>(adapter);
  }
  throw ConfigError("unsupported adapter kind");
}

std::optional<ImageInfo> check_image(std::span<const std::uint8_t> bytes, std::string& reason) {
  if (bytes.empty()) {
    reason = "empty body";
    return std::nullopt;
  }
  if (bytes.size() > kMaxImageBytes) {
    reason = "larger than 64 MiB";
    return std::nullopt;
  }
  auto info = probe_image(bytes);
  if (!info) {
    reason = "not a decodable image";
    return std::nullopt;
  }
  if (info->width < kMinImageSide || info->height < kMinImageSide) {
    reason = "smaller than 32x32 px";
    return std::nullopt;
  }
  return info;
}

ArticleFetch fetch_articles(RecordSource& source, const std::string& query, const DateRange& range,
                            const Timestamp& as_of) {
  if (range.to < range.from) throw ConfigError("date range is inverted");
  ArticleFetch result;
  const auto records = source.list(ListQuery{query, {}, range});
  std::vector<Article> parsed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& rec = records[i];
    try {
      Article a;
      a.article_id = require_string(rec, "article_id");
      a.source_url = require_string(rec, "source_url");
      if (a.article_id.empty() || a.source_url.empty()) throw InvariantError("empty article_id or source_url");
      a.source_name = rec.contains("source_name") ? require_string(rec, "source_name") : source.adapter().adapter_name;
      if (rec.contains("published_at") && !rec["published_at"].is_null()) {
        a.published_at = Date::parse(require_string(rec, "published_at"));
      } else {
        a.published_at = as_of.date();
        a.date_inferred = true;
      }
      a.body_text = require_string(rec, "body_text");
      a.raw_image_urls = string_array(rec, "image_urls", false);
      if (!range.contains(a.published_at)) continue;
      parsed.push_back(std::move(a));
    } catch (const Error& e) {
      const std::string msg = source.adapter().adapter_name + " record " + std::to_string(i) + ": " + e.what();
      spdlog::warn("skipping malformed article record: {}", msg);
      result.payload_errors.push_back(msg);
    }
  }
  std::sort(parsed.begin(), parsed.end(), [](const Article& a, const Article& b) {
    return std::tie(a.published_at, a.article_id) < std::tie(b.published_at, b.article_id);
  });
  std::set<std::string> seen_urls;
  std::set<std::string> seen_ids;
  for (auto& a : parsed) {
    if (!seen_urls.insert(a.source_url).second) continue;
    if (!seen_ids.insert(a.article_id).second) {
      result.payload_errors.push_back("duplicate article_id " + a.article_id + " with a different source_url");
      continue;
    }
    result.articles.push_back(std::move(a));
  }
  return result;
}

CandidateCollection collect_candidate_images(const Article& article, RecordSource& source, ContentStore& store,
                                             const Timestamp& fetched_at) {
  std::vector<std::string> urls;
  std::set<std::string> seen;
  auto add = [&](const std::string& u) {
    if (!u.empty() && seen.insert(u).second) urls.push_back(u);
  };
  for (const auto& u : article.raw_image_urls) add(u);
  for (const auto& u : source.discover_image_urls(article)) add(u);

  struct Outcome {
    std::optional<std::string> image_id;
    ImageInfo info;
    std::string skip_reason;
  };
  const auto outcomes = parallel_map(urls, source.adapter().parallelism, [&](const std::string& url) {
    Outcome o;
    FetchResult r = source.fetch(url);
    if (r.status != FetchStatus::ok) {
      o.skip_reason = r.status == FetchStatus::not_found ? "not found (" + r.message + ")" : "fetch failed (" + r.message + ")";
      return o;
    }
    auto info = check_image(r.bytes, o.skip_reason);
    if (!info) return o;
    o.info = *info;
    o.image_id = store.put(r.bytes, ImageMeta{info->format, info->width, info->height, {url}});
    return o;
  });

  CandidateCollection out;
  std::map<std::string, CandidateImage> by_id;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    const Outcome& o = outcomes[i];
    if (!o.image_id) {
      out.skips.push_back({urls[i], o.skip_reason});
      continue;
    }
    auto [it, inserted] = by_id.try_emplace(*o.image_id);
    CandidateImage& c = it->second;
    if (inserted) {
      c.image_id = *o.image_id;
      c.article_id = article.article_id;
      c.source_url = urls[i];
      c.format = o.info.format;
      c.width_px = o.info.width;
      c.height_px = o.info.height;
      c.fetched_at = fetched_at;
    }
    c.source_urls.push_back(urls[i]);
  }
  for (auto& [id, c] : by_id) {
    sort_unique(c.source_urls);
    out.candidates.push_back(std::move(c));
  }
  if (out.candidates.empty()) {
    std::string msg = "article " + article.article_id + ": no retrievable images";
    if (!out.skips.empty()) msg += " (" + std::to_string(out.skips.size()) + " skipped)";
    throw EmptyCandidateSet(msg);
  }
  return out;
}

RealPool fetch_real_pool(const std::vector<RecordSource*>& sources, const DateRange& range, ContentStore& store,
                         const std::vector<std::string>& exclude_terms) {
  if (sources.empty()) throw ConfigError("fetch_real_pool needs at least one adapter");
  if (range.to < range.from) throw ConfigError("date range is inverted");
  RealPool pool;
  std::set<std::string> seen;
  int failed_adapters = 0;
  for (RecordSource* src : sources) {
    const SourceAdapter& ad = src->adapter();
    std::vector<json> records;
    try {
      records = src->list(ListQuery{"", exclude_terms, range});
    } catch (const Error& e) {
      ++failed_adapters;
      pool.warnings.push_back(ad.adapter_name + " unavailable: " + e.what());
      spdlog::warn("real-pool adapter {} failed: {}", ad.adapter_name, e.what());
      continue;
    }
    struct Parsed {
      RealImage meta;
      std::string url;
      std::string error;
    };
    std::vector<Parsed> parsed;
    for (std::size_t i = 0; i < records.size(); ++i) {
      Parsed p;
      try {
        p.url = require_string(records[i], "url");
        p.meta.outlet = require_string(records[i], "outlet");
        p.meta.published_at = Date::parse(require_string(records[i], "published_at"));
        p.meta.source_url = p.url;
        if (records[i].contains("source")) {
          p.meta.source = parse_real_source(require_string(records[i], "source"));
        } else if (auto declared = implied_real_source(ad)) {
          p.meta.source = *declared;
        } else {
          throw InvariantError("record has no news/social source and the adapter declares none");
        }
        if (!range.contains(p.meta.published_at)) continue;
      } catch (const Error& e) {
        pool.warnings.push_back(ad.adapter_name + " record " + std::to_string(i) + ": " + e.what());
        continue;
      }
      parsed.push_back(std::move(p));
    }
    const auto ids = parallel_map(parsed, ad.parallelism, [&](const Parsed& p) -> std::pair<std::string, std::string> {
      FetchResult r = src->fetch(p.url);
      if (r.status != FetchStatus::ok) return {"", "fetch failed (" + r.message + ")"};
      std::string reason;
      auto info = check_image(r.bytes, reason);
      if (!info) return {"", reason};
      return {store.put(r.bytes, ImageMeta{info->format, info->width, info->height, {p.url}}), ""};
    });
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      if (ids[i].first.empty()) {
        pool.skips.push_back({parsed[i].url, ids[i].second});
        continue;
      }
      if (!seen.insert(ids[i].first).second) {
        ++pool.duplicates_dropped;
        continue;
      }
      RealImage img = parsed[i].meta;
      img.image_id = ids[i].first;
      ++pool.per_source_counts[std::string(to_string(img.source))];
      ++pool.per_adapter_counts[ad.adapter_name];
      pool.images.push_back(std::move(img));
    }
  }
  if (failed_adapters == static_cast<int>(sources.size()))
    throw SourceUnavailable("every real-pool adapter failed");
  std::sort(pool.images.begin(), pool.images.end(),
            [](const RealImage& a, const RealImage& b) { return a.image_id < b.image_id; });
  if (pool.images.empty()) {
    pool.warnings.push_back("real pool is empty for the requested date range");
    spdlog::warn("real pool is empty for {}..{}", range.from.to_string(), range.to.to_string());
  }
  return pool;
}

std::vector<std::string> extract_img_sources(const std::string& html, const std::string& base_url) {
  static const std::regex img_tag(R"(<img\b[^>]*>)", std::regex::icase);
  static const std::regex src_attr(R"re((?:^|[\s"'/])src\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+)))re", std::regex::icase);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto it = std::sregex_iterator(html.begin(), html.end(), img_tag); it != std::sregex_iterator(); ++it) {
    const std::string tag = it->str();
    std::smatch m;
    if (!std::regex_search(tag, m, src_attr)) continue;
    std::string src = m[1].matched ? m[1].str() : m[2].matched ? m[2].str() : m[3].str();
    if (src.empty() || src.rfind("data:", 0) == 0) continue;
    std::string url = resolve_url(base_url, src);
    if (seen.insert(url).second) out.push_back(std::move(url));
  }
  return out;
}

}  // namespace wildharvest
