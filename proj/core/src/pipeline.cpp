#include "wildharvest/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <set>

#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/evaluation.hpp"
#include "wildharvest/extraction.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/records.hpp"
#include "wildharvest/retrieval.hpp"
#include "wildharvest/rng.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"ingest", "extract", "score",    "expand", "segment",
                                               "pair",   "assemble", "emit", "eval"};
  return stages;
}

std::vector<std::string> parse_stages(const std::string& spec) {
  if (spec == "all") return pipeline_stages();
  std::set<std::string> wanted;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string name = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!name.empty()) {
      if (std::find(pipeline_stages().begin(), pipeline_stages().end(), name) == pipeline_stages().end())
        throw ConfigError("unknown stage '" + name + "'");
      wanted.insert(name);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (wanted.empty()) throw ConfigError("no stages requested");
  std::vector<std::string> out;
  for (const auto& s : pipeline_stages())
    if (wanted.count(s)) out.push_back(s);
  return out;
}

namespace work_files {
std::string round_manifest(int t) { return "rounds/round-" + std::to_string(t) + ".manifest.jsonl"; }
std::string round_state(int t) { return "rounds/round-" + std::to_string(t) + ".json"; }
std::string component_manifest(int t, const std::string& component) {
  return "manifests/round-" + std::to_string(t) + "/" + component + ".manifest.jsonl";
}
}  // namespace work_files

// --- configuration ---------------------------------------------------------------

std::string config_hash(const json& doc) {
  json copy = doc;
  if (copy.contains("paths") && copy["paths"].is_object()) {
    copy["paths"].erase("store");
    copy["paths"].erase("work");
  }
  return sha256_hex(copy.dump());
}

std::uint64_t RunConfig::seed(const std::string& stage) const {
  if (auto it = seeds.find(stage); it != seeds.end()) return it->second;
  const auto base = seeds.find("base");
  return derive_seed(base == seeds.end() ? 0 : base->second, stage);
}

const BackendDescriptor& RunConfig::backend_for(const std::string& stage) const {
  auto s = stage_backends.find(stage);
  if (s == stage_backends.end()) throw ConfigError("no backend configured for stage " + stage);
  auto b = backends.find(s->second);
  if (b == backends.end()) throw ConfigError("stage " + stage + " names unknown backend " + s->second);
  return b->second;
}

namespace {

const std::set<std::string> kTopLevelKeys{"format",   "version",  "as_of",     "thresholds", "adapters", "sources",
                                          "query",    "date_range", "real_pool_range", "exclude_terms", "backends",
                                          "stage_backends", "seeds", "paths", "templates", "pairing",
                                          "segmentation", "timeline", "replay", "registry", "train", "eval"};

DateRange range_from_json(const json& j, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be an object with from/to");
  DateRange r{Date::parse(require_string(j, "from")), Date::parse(require_string(j, "to"))};
  if (r.to < r.from) throw ConfigError(std::string(what) + " is inverted");
  return r;
}

fs::path resolve_in(const fs::path& base, const std::string& p) {
  fs::path path = p;
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

std::optional<fs::path> optional_path(const json& obj, const char* key, const fs::path& base) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return resolve_in(base, require_string(obj, key));
}

}  // namespace

RunConfig run_config_from_json(json doc, const fs::path& base_dir, const ConfigOverrides& ov) {
  try {
    if (!doc.is_object() || doc.value("format", std::string{}) != kConfigFormat)
      throw ConfigError("not a wildharvest config (format must be \"wildharvest.config\")");
    if (doc.value("version", 0) != 1) throw ConfigError("unsupported config version");
    for (const auto& [k, _] : doc.items())
      if (!kTopLevelKeys.count(k)) throw ConfigError("unknown config key '" + k + "'");

    if (ov.rho) doc["thresholds"]["replay_rho"] = *ov.rho;
    if (ov.seed) doc["seeds"]["base"] = *ov.seed;

    RunConfig c;
    c.base_dir = base_dir;
    if (doc.contains("as_of")) {
      c.as_of = Timestamp::parse(require_string(doc, "as_of"));
    } else {
      c.as_of = Timestamp::now();
      spdlog::warn("config has no as_of; timestamps will differ between runs");
    }
    c.thresholds = thresholds_from_json(doc.value("thresholds", json::object()));

    const json adapters_doc = doc.value("adapters", json::object());

    for (const auto& [name, a] : adapters_doc.items()) {
      c.adapters.emplace(name, adapter_from_json(name, a));
    }
    const json sources = doc.value("sources", json::object());
    c.article_adapter = sources.value("articles", std::string{});
    c.image_adapter = sources.value("images", c.article_adapter);
    if (sources.contains("real_pool")) c.real_pool_adapters = string_array(sources, "real_pool");
    auto check_adapter = [&](const std::string& n, const char* role) {
      if (!n.empty() && !c.adapters.count(n)) throw ConfigError(std::string(role) + " adapter '" + n + "' is not defined");
    };
    check_adapter(c.article_adapter, "article");
    check_adapter(c.image_adapter, "image");
    for (const auto& n : c.real_pool_adapters) check_adapter(n, "real-pool");

    c.query = doc.value("query", std::string{});
    c.date_range = doc.contains("date_range") ? range_from_json(doc["date_range"], "date_range")
                                              : DateRange{Date{1970, 1, 1}, c.as_of.date()};
    c.real_pool_range = doc.contains("real_pool_range") ? range_from_json(doc["real_pool_range"], "real_pool_range")
                                                        : c.date_range;
    c.exclude_terms = doc.contains("exclude_terms") ? string_array(doc, "exclude_terms") : default_ai_exclusion_terms();

    const json backends_doc = doc.value("backends", json::object());

    for (const auto& [name, b] : backends_doc.items())
      c.backends.emplace(name, backend_from_json(name, b));
    const json stage_backends_doc = doc.value("stage_backends", json::object());
    for (const auto& [stage, name] : stage_backends_doc.items()) {
      if (!name.is_string()) throw ConfigError("stage_backends values must be backend names");
      c.stage_backends[stage] = name.get<std::string>();
    }
    for (const char* stage : {"extract", "score", "embed", "segment", "train"}) {
      if (!c.stage_backends.count(stage)) throw ConfigError(std::string("stage_backends lacks '") + stage + "'");
      (void)c.backend_for(stage);
    }
    if (c.backend_for("embed").dim <= 0) throw ConfigError("the embed backend needs a positive dim");

    const json seeds_doc = doc.value("seeds", json::object());

    for (const auto& [name, v] : seeds_doc.items()) {
      if (!v.is_number_unsigned()) throw ConfigError("seed '" + name + "' must be a non-negative integer");
      c.seeds[name] = v.get<std::uint64_t>();
    }

    const json paths = doc.value("paths", json::object());
    c.store_dir = resolve_in(base_dir, paths.value("store", std::string{"out/store"}));
    c.work_dir = resolve_in(base_dir, paths.value("work", std::string{"out/work"}));
    c.templates_dir = resolve_in(base_dir, paths.value("templates", std::string{"templates"}));
    if (const char* env = std::getenv("WILDHARVEST_STORE"); env && *env) c.store_dir = env;
    if (ov.store) c.store_dir = *ov.store;
    if (ov.work) c.work_dir = *ov.work;

    const json templates = doc.value("templates", json::object());
    c.p1_ref = templates.value("p1", c.p1_ref);
    c.p2_ref = templates.value("p2", c.p2_ref);
    c.word_budget = templates.value("word_budget", c.word_budget);
    if (c.word_budget == 0) throw ConfigError("word_budget must be positive");

    const json pairing = doc.value("pairing", json::object());
    c.pairing.k = pairing.value("k", static_cast<std::size_t>(c.thresholds.top_k));
    c.pairing.reals_per_fake = pairing.value("reals_per_fake", std::size_t{1});
    c.pairing.global_without_replacement = pairing.value("global_without_replacement", true);
    c.pair_segments = pairing.value("use_segments", true);
    if (c.pairing.k == 0 || c.pairing.reals_per_fake == 0) throw ConfigError("pairing k and reals_per_fake must be positive");

    c.keep_originals = doc.value("segmentation", json::object()).value("keep_originals", true);

    const json timeline = doc.value("timeline", json::object());
    c.timeline.interval_months = timeline.value("interval_months", 3);
    if (timeline.contains("anchor")) c.timeline.anchor = Date::parse(require_string(timeline, "anchor"));
    if (timeline.contains("rounds")) c.timeline.rounds = timeline["rounds"].get<int>();
    if (c.timeline.interval_months < 1) throw ConfigError("interval_months must be at least 1");
    if (c.timeline.rounds && *c.timeline.rounds < 1) throw ConfigError("timeline.rounds must be at least 1");

    const json replay = doc.value("replay", json::object());
    const std::string strategy = replay.value("strategy", std::string{"stratified"});
    if (strategy == "stratified") c.replay_strategy = ReplayStrategy::stratified;
    else if (strategy == "uniform") c.replay_strategy = ReplayStrategy::uniform;
    else throw ConfigError("replay.strategy must be stratified or uniform");
    c.pretraining_manifest = optional_path(replay, "pretraining_manifest", base_dir);

    const json registry = doc.value("registry", json::object());
    c.registry_file = optional_path(registry, "file", base_dir);
    const std::string mode = registry.value("mode", std::string{"strict"});
    if (mode == "strict") c.registry_mode = RegistryMode::strict;
    else if (mode == "lenient") c.registry_mode = RegistryMode::lenient;
    else throw ConfigError("registry.mode must be strict or lenient");

    c.hyperparameters = doc.value("train", json::object()).value("hyperparameters", json::object());

    const json ev = doc.value("eval", json::object());
    c.scores_file = optional_path(ev, "scores", base_dir);
    c.annotations_file = optional_path(ev, "annotations", base_dir);
    c.groupings = ev.value("groupings", c.groupings);
    (void)parse_groupings(c.groupings);
    c.precision_fraction = ev.value("precision_fraction", c.precision_fraction);
    if (!(c.precision_fraction > 0.0 && c.precision_fraction <= 1.0))
      throw ConfigError("precision_fraction must lie in (0,1]");

    c.raw = std::move(doc);
    c.config_hash = config_hash(c.raw);
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvariantError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& file, const ConfigOverrides& overrides) {
  if (!fs::exists(file)) throw ConfigError("config file " + file.string() + " does not exist");
  json doc;
  try {
    doc = json::parse(read_text(file));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(std::move(doc), fs::absolute(file).parent_path(), overrides);
}

// --- lock ------------------------------------------------------------------------

StoreLock::StoreLock(const fs::path& store_dir) : path_(store_dir / ".lock") {
  fs::create_directories(store_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw LockError("store " + store_dir.string() + " is in use by another run (remove " + path_.string() +
                      " if that run is gone)");
    throw LockError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

StoreLock::~StoreLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// --- stages ----------------------------------------------------------------------

namespace {

std::string file_hash(const fs::path& p) { return sha256_hex(read_text(p)); }

struct Ctx {
  const RunConfig& cfg;
  ContentStore store;
  fs::path work;

  fs::path at(const std::string& rel) const { return work / rel; }
};

struct StageDef {
  std::string name;
  /// Work-relative inputs that an earlier stage must have produced.
  std::function<std::vector<std::string>(const Ctx&)> inputs;
  /// Files outside the work dir whose contents feed the stage.
  std::function<std::vector<fs::path>(const Ctx&)> external;
  std::function<json(Ctx&, std::vector<std::string>& outputs)> run;
};

std::vector<std::string> fixed(std::initializer_list<const char*> names) { return {names.begin(), names.end()}; }

template <typename T>
std::map<std::string, std::vector<T>> group_by_article(const std::vector<T>& items) {
  std::map<std::string, std::vector<T>> out;
  for (const auto& i : items) out[i.article_id].push_back(i);
  return out;
}

void write_json_file(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  write_file_atomic(p, j.dump(2) + "\n");
}

void write_rows(const fs::path& p, const std::vector<json>& rows) {
  fs::create_directories(p.parent_path());
  write_jsonl(p, rows);
}

// ingest -------------------------------------------------------------------------

json stage_ingest(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.article_adapter.empty()) throw ConfigError("sources.articles is not configured");
  auto src = open_source(cfg.adapters.at(cfg.article_adapter), cfg.base_dir);
  ArticleFetch af = fetch_articles(*src, cfg.query, cfg.date_range, cfg.as_of);
  write_records(ctx.at(work_files::kArticles), af.articles);

  if (cfg.real_pool_adapters.empty()) throw ConfigError("sources.real_pool is not configured");
  std::vector<std::unique_ptr<RecordSource>> owned;
  std::vector<RecordSource*> ptrs;
  for (const auto& name : cfg.real_pool_adapters) {
    owned.push_back(open_source(cfg.adapters.at(name), cfg.base_dir));
    ptrs.push_back(owned.back().get());
  }
  RealPool pool = fetch_real_pool(ptrs, cfg.real_pool_range, ctx.store, cfg.exclude_terms);
  write_records(ctx.at(work_files::kRealPool), pool.images);
  outputs = {work_files::kArticles, work_files::kRealPool};

  json skips = json::array();
  for (const auto& s : pool.skips) skips.push_back(json{{"url", s.url}, {"reason", s.reason}});
  return json{{"articles", af.articles.size()},
              {"payload_errors", af.payload_errors},
              {"real_pool",
               {{"images", pool.images.size()},
                {"per_source", pool.per_source_counts},
                {"per_adapter", pool.per_adapter_counts},
                {"duplicates_dropped", pool.duplicates_dropped},
                {"skips", skips},
                {"warnings", pool.warnings}}}};
}

// extract ------------------------------------------------------------------------

json stage_extract(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  const auto articles = read_records<Article>(ctx.at(work_files::kArticles), article_from_json);
  const PromptTemplate p1 = load_template(cfg.templates_dir, cfg.p1_ref);
  auto g = make_text_backend(cfg.backend_for("extract"), cfg.base_dir);
  ExtractionRun run = extract_corpus(articles, p1, *g, cfg.word_budget);
  write_records(ctx.at(work_files::kDescriptions), run.descriptions);
  std::vector<json> quarantine;
  for (const auto& [id, reason] : run.quarantined) quarantine.push_back(json{{"article_id", id}, {"reason", reason}});
  write_rows(ctx.at(work_files::kQuarantine), quarantine);

  std::map<std::string, const Article*> by_id;
  for (const auto& a : articles) by_id[a.article_id] = &a;
  auto images = open_source(cfg.adapters.at(cfg.image_adapter), cfg.base_dir);
  std::vector<CandidateImage> candidates;
  json skips = json::array();
  std::vector<std::string> empty_articles;
  std::size_t relevant = 0;
  for (const auto& d : run.descriptions) {
    if (!d.relevant) continue;
    ++relevant;
    const Article merged = merge_image_urls(*by_id.at(d.article_id), d);
    try {
      CandidateCollection cc = collect_candidate_images(merged, *images, ctx.store, cfg.as_of);
      for (const auto& s : cc.skips) skips.push_back(json{{"article_id", d.article_id}, {"url", s.url}, {"reason", s.reason}});
      candidates.insert(candidates.end(), cc.candidates.begin(), cc.candidates.end());
    } catch (const EmptyCandidateSet& e) {
      spdlog::warn("{}", e.what());
      empty_articles.push_back(d.article_id);
    }
  }
  write_records(ctx.at(work_files::kCandidates), candidates);
  outputs = {work_files::kDescriptions, work_files::kQuarantine, work_files::kCandidates};
  return json{{"articles", articles.size()},
              {"relevant", relevant},
              {"irrelevant", run.descriptions.size() - relevant},
              {"quarantined", quarantine.size()},
              {"candidates", candidates.size()},
              {"empty_candidate_articles", empty_articles},
              {"skips", skips}};
}

// score --------------------------------------------------------------------------

json stage_score(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  const auto descriptions = read_records<DescriptionSet>(ctx.at(work_files::kDescriptions), description_set_from_json);
  const auto by_article = group_by_article(read_records<CandidateImage>(ctx.at(work_files::kCandidates), candidate_from_json));
  const PromptTemplate p2 = load_template(cfg.templates_dir, cfg.p2_ref);
  auto v = make_scorer_backend(cfg.backend_for("score"), cfg.base_dir);
  const ImageLoader load = store_loader(ctx.store);
  std::vector<ScoredCandidate> all;
  std::size_t failed = 0;
  for (const auto& d : descriptions) {
    if (!d.relevant) continue;
    auto it = by_article.find(d.article_id);
    if (it == by_article.end()) continue;
    for (auto& s : score_candidates(it->second, d, p2, *v, load)) {
      if (s.score_failed) ++failed;
      all.push_back(std::move(s));
    }
  }
  write_records(ctx.at(work_files::kScored), all);
  outputs = {work_files::kScored};
  return json{{"scored", all.size()}, {"score_failed", failed}};
}

// expand -------------------------------------------------------------------------

json stage_expand(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  const auto by_article = group_by_article(read_records<ScoredCandidate>(ctx.at(work_files::kScored), scored_from_json));
  auto f = make_embedding_backend(cfg.backend_for("embed"), cfg.base_dir);
  EmbeddingCache cache;
  const ImageLoader load = store_loader(ctx.store);
  std::vector<ScoredCandidate> selection;
  std::vector<json> finals;
  std::size_t anchors = 0, expanded = 0;
  json warnings = json::array();
  for (const auto& [article, scored] : by_article) {
    std::vector<std::string> usable;
    for (const auto& s : scored)
      if (!s.score_failed) usable.push_back(s.image_id);
    const EmbeddingMap emb = embed_all(usable, load, *f, &cache);
    ArticleRetrieval r = retrieve_article(scored, emb, cfg.thresholds);
    std::vector<std::string> united = r.anchors;
    united.insert(united.end(), r.expanded.begin(), r.expanded.end());
    sort_unique(united);
    if (united != r.final_set) throw InvariantError("article " + article + ": final set differs from anchors ∪ expansion");
    anchors += r.anchors.size();
    expanded += r.expanded.size();
    for (const auto& w : r.warnings) warnings.push_back(article + ": " + w);
    for (const auto& s : r.scored)
      if (s.selection != Selection::rejected)
        finals.push_back(json{{"article_id", article}, {"image_id", s.image_id}, {"selection", to_string(s.selection)}});
    selection.insert(selection.end(), r.scored.begin(), r.scored.end());
  }
  write_records(ctx.at(work_files::kSelection), selection);
  write_rows(ctx.at(work_files::kFinal), finals);
  outputs = {work_files::kSelection, work_files::kFinal};
  return json{{"articles", by_article.size()},
              {"anchors", anchors},
              {"expanded", expanded},
              {"final", finals.size()},
              {"warnings", warnings}};
}

struct FinalRow {
  std::string article_id;
  std::string image_id;
};

std::vector<FinalRow> read_finals(const fs::path& p) {
  std::vector<FinalRow> out;
  for (const auto& r : read_jsonl(p)) out.push_back(FinalRow{require_string(r, "article_id"), require_string(r, "image_id")});
  return out;
}

std::vector<std::string> unique_final_ids(const std::vector<FinalRow>& rows) {
  std::vector<std::string> ids;
  for (const auto& r : rows) ids.push_back(r.image_id);
  sort_unique(ids);
  return ids;
}

// segment ------------------------------------------------------------------------

json stage_segment(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  const auto finals = unique_final_ids(read_finals(ctx.at(work_files::kFinal)));
  auto s = make_segmenter_backend(cfg.backend_for("segment"), cfg.base_dir);
  SegmentationResult r = segment_images(finals, *s, cfg.thresholds, ctx.store);
  write_records(ctx.at(work_files::kSegments), r.segments);
  outputs = {work_files::kSegments};
  std::size_t clipped = 0;
  for (const auto& seg : r.segments) clipped += seg.clipped ? 1 : 0;
  return json{{"images", finals.size()},
              {"segments", r.segments.size()},
              {"clipped", clipped},
              {"failed", r.failed},
              {"warnings", r.warnings}};
}

// pair ---------------------------------------------------------------------------

json stage_pair(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  GeneratorRegistry registry;
  if (cfg.registry_file)
    registry = register_generators(*cfg.registry_file, cfg.seed("registry"), cfg.registry_mode, &ctx.store);
  write_json_file(ctx.at(work_files::kRegistry), to_json(registry));

  const auto finals = unique_final_ids(read_finals(ctx.at(work_files::kFinal)));
  const auto segments = read_records<Segment>(ctx.at(work_files::kSegments), segment_from_json);
  std::map<std::string, std::vector<std::string>> segs_of;
  for (const auto& s : segments) segs_of[s.parent_image_id].push_back(s.segment_id);
  std::vector<std::string> fakes;
  for (const auto& id : finals) {
    auto it = segs_of.find(id);
    if (cfg.pair_segments && it != segs_of.end()) fakes.insert(fakes.end(), it->second.begin(), it->second.end());
    else fakes.push_back(id);
  }
  std::size_t itw_units = fakes.size();
  for (const auto& row : registry.rows) fakes.insert(fakes.end(), row.train_ids.begin(), row.train_ids.end());
  sort_unique(fakes);

  std::vector<std::string> reals;
  for (const auto& r : read_records<RealImage>(ctx.at(work_files::kRealPool), real_image_from_json)) reals.push_back(r.image_id);

  auto f = make_embedding_backend(cfg.backend_for("embed"), cfg.base_dir);
  EmbeddingCache cache;
  const ImageLoader load = store_loader(ctx.store);
  const RealPoolIndex idx(embed_all(reals, load, *f, &cache));
  const EmbeddingMap fake_emb = embed_all(fakes, load, *f, &cache);
  const auto pairs = assign_pairs(fakes, fake_emb, idx, cfg.pairing);
  write_rows(ctx.at(work_files::kPairs), pairs_to_rows(pairs));
  outputs = {work_files::kRegistry, work_files::kPairs};

  json issues = json::array();
  for (const auto& i : registry.issues) issues.push_back(json{{"row", i.row}, {"models", i.models}, {"message", i.message}});
  return json{{"itw_units", itw_units},
              {"generator_units", fakes.size() - itw_units},
              {"real_pool", reals.size()},
              {"pairs", pairs.size()},
              {"registry_issues", issues}};
}

// assemble -----------------------------------------------------------------------

struct Component {
  std::vector<DatasetEntry> itw;
  std::vector<DatasetEntry> gen;
};

json stage_assemble(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  std::map<std::string, Article> articles;
  for (auto& a : read_records<Article>(ctx.at(work_files::kArticles), article_from_json)) articles.emplace(a.article_id, a);
  const auto finals = read_finals(ctx.at(work_files::kFinal));
  const auto segments = read_records<Segment>(ctx.at(work_files::kSegments), segment_from_json);
  const auto pairs = pairs_from_rows(read_jsonl(ctx.at(work_files::kPairs)));
  std::map<std::string, RealImage> reals;
  for (auto& r : read_records<RealImage>(ctx.at(work_files::kRealPool), real_image_from_json)) reals.emplace(r.image_id, r);
  const json registry_doc = read_json(ctx.at(work_files::kRegistry));

  // In-the-wild fakes: one entry per image; an image found in several articles
  // takes the earliest article date and lists every article.
  std::map<std::string, DatasetEntry> itw;
  for (const auto& f : finals) {
    const Article& a = articles.at(f.article_id);
    DatasetEntry e;
    e.image_id = f.image_id;
    e.label = kLabelGenerated;
    e.origin = Origin::itw;
    e.event_date = a.published_at;
    e.date_inferred = a.date_inferred;
    e.provenance = {"article:" + a.article_id};
    auto [it, fresh] = itw.try_emplace(f.image_id, e);
    if (!fresh) {
      DatasetEntry& cur = it->second;
      cur.provenance.push_back("article:" + a.article_id);
      if (a.published_at < *cur.event_date) {
        cur.event_date = a.published_at;
        cur.date_inferred = a.date_inferred;
      }
    }
  }
  std::set<std::string> has_segments;
  std::vector<DatasetEntry> itw_fakes;
  for (const auto& s : segments) {
    const DatasetEntry& parent = itw.at(s.parent_image_id);
    DatasetEntry e = parent;
    e.image_id = s.segment_id;
    e.parent_image_id = s.parent_image_id;
    e.provenance.push_back("segment-of:" + s.parent_image_id);
    itw_fakes.push_back(e);
    has_segments.insert(s.parent_image_id);
  }
  for (auto& [id, e] : itw)
    if (cfg.keep_originals || !has_segments.count(id)) itw_fakes.push_back(e);

  std::vector<DatasetEntry> gen_fakes;
  for (const auto& row : registry_doc.at("rows")) {
    const std::string models = require_string(row, "models");
    const Date release = Date::parse_month(require_string(row, "release"));
    for (const auto& id : string_array(row, "train_ids")) {
      DatasetEntry e;
      e.image_id = id;
      e.label = kLabelGenerated;
      e.origin = Origin::gen;
      e.generator_name = models;
      e.event_date = release;
      e.provenance = {"generator:" + models};
      gen_fakes.push_back(e);
    }
  }

  std::map<std::string, const DatasetEntry*> fake_by_id;
  for (const auto& e : itw_fakes) fake_by_id[e.image_id] = &e;
  for (const auto& e : gen_fakes) fake_by_id[e.image_id] = &e;
  std::vector<DatasetEntry> itw_reals, gen_reals;
  for (const auto& p : pairs) {
    auto fit = fake_by_id.find(p.fake_id);
    if (fit == fake_by_id.end()) throw MissingInputError("pair names unknown fake " + p.fake_id + "; rerun stage pair");
    const DatasetEntry& fake = *fit->second;
    for (const auto& rid : p.real_ids) {
      const RealImage& r = reals.at(rid);
      DatasetEntry e;
      e.image_id = rid;
      e.label = kLabelReal;
      e.origin = Origin::real_pool;
      e.event_date = fake.event_date;
      e.date_inferred = fake.date_inferred;
      e.provenance = {"paired-with:" + p.fake_id, "outlet:" + r.outlet, "source:" + std::string(to_string(r.source))};
      (fake.origin == Origin::gen ? gen_reals : itw_reals).push_back(e);
    }
  }

  std::vector<DatasetEntry> everything;
  for (const auto* part : {&itw_fakes, &gen_fakes, &itw_reals, &gen_reals})
    everything.insert(everything.end(), part->begin(), part->end());
  for (const auto& e : everything)
    if (!ctx.store.contains(e.image_id)) throw StoreError("image " + e.image_id + " is missing from the content store");

  const TimelinePartition partition = partition_timeline(everything, cfg.timeline);
  std::map<int, Component> rounds;
  auto place = [&](const std::vector<DatasetEntry>& v, bool is_gen) {
    for (const auto& e : v) {
      const int t = round_of(*e.event_date, cfg.timeline);
      (is_gen ? rounds[t].gen : rounds[t].itw).push_back(e);
    }
  };
  place(itw_fakes, false);
  place(itw_reals, false);
  place(gen_fakes, true);
  place(gen_reals, true);

  std::set<std::string> test_ids;
  for (const auto& row : registry_doc.at("rows"))
    for (const auto& id : string_array(row, "test_ids")) test_ids.insert(id);

  std::vector<DatasetEntry> pretraining;
  if (cfg.pretraining_manifest) {
    for (auto e : read_manifest(*cfg.pretraining_manifest).entries) {
      e.round_introduced = 0;
      pretraining.push_back(std::move(e));
    }
  }

  const std::uint64_t base_seed = cfg.seed("assemble");
  auto stamp = [&](DatasetManifest& m) {
    m.created_at = cfg.as_of;
    m.config_hash = cfg.config_hash;
  };
  std::vector<DatasetManifest> assembled;
  json rounds_summary = json::array();
  for (const auto& w : partition.windows) {
    const int t = w.t;
    const std::uint64_t seed = derive_seed(base_seed, "round-" + std::to_string(t));
    auto make = [&](const std::string& id, std::vector<DatasetEntry> entries) {
      DatasetManifest m;
      m.manifest_id = id;
      m.round = t;
      m.seed = seed;
      for (auto& e : entries) e.round_introduced = t;
      m.entries = merge_entries({entries});
      stamp(m);
      return m;
    };
    DatasetManifest itw_m = make("itw-round-" + std::to_string(t), rounds[t].itw);
    DatasetManifest gen_m = make("gen-round-" + std::to_string(t), rounds[t].gen);

    std::vector<DatasetEntry> pool = accumulated_pool(assembled, t);
    if (!pretraining.empty()) pool = merge_entries({pool, pretraining});
    ReplayBuffer buf = sample_replay(pool, cfg.thresholds.replay_rho, derive_seed(seed, "replay"), t, cfg.replay_strategy);
    DatasetManifest replay_m;
    replay_m.manifest_id = "replay-round-" + std::to_string(t);
    replay_m.round = t;
    replay_m.seed = buf.seed;
    replay_m.entries = buf.entries;
    stamp(replay_m);

    DatasetManifest round_m = assemble_round(itw_m, gen_m, replay_m, t, seed, test_ids, cfg.as_of);
    round_m.config_hash = cfg.config_hash;

    for (const auto& [m, comp] : {std::pair{&itw_m, "itw"}, {&gen_m, "gen"}, {&replay_m, "replay"}}) {
      const std::string rel = work_files::component_manifest(t, comp);
      fs::create_directories(ctx.at(rel).parent_path());
      write_manifest(ctx.at(rel), *m);
      outputs.push_back(rel);
    }
    fs::create_directories(ctx.at(work_files::round_manifest(t)).parent_path());
    write_manifest(ctx.at(work_files::round_manifest(t)), round_m);
    outputs.push_back(work_files::round_manifest(t));

    UpdateRound state{t, w, itw_m.manifest_id, gen_m.manifest_id, replay_m.manifest_id, round_m.manifest_id, seed};
    write_round_state(ctx.at(work_files::round_state(t)), state);
    outputs.push_back(work_files::round_state(t));

    rounds_summary.push_back(json{{"t", t},
                                  {"window", {w.start.to_string(), w.end.to_string()}},
                                  {"itw", itw_m.entries.size()},
                                  {"gen", gen_m.entries.size()},
                                  {"replay", replay_m.entries.size()},
                                  {"replay_pool", buf.source_pool_size},
                                  {"assembled", round_m.entries.size()},
                                  {"manifest_hash", manifest_hash(round_m)}});
    assembled.push_back(std::move(round_m));
  }

  json windows = json::array();
  for (const auto& w : partition.windows) {
    const auto it = partition.assignment.find(w.t);
    windows.push_back(json{{"t", w.t},
                           {"start", w.start.to_string()},
                           {"end", w.end.to_string()},
                           {"entries", it == partition.assignment.end() ? 0 : it->second.size()}});
  }
  write_json_file(ctx.at(work_files::kTimeline), json{{"windows", windows}, {"warnings", partition.warnings}});
  outputs.push_back(work_files::kTimeline);

  DatasetManifest fakes_m;
  fakes_m.manifest_id = "itw-fakes";
  fakes_m.round = 0;
  fakes_m.seed = base_seed;
  for (auto e : itw_fakes) {
    e.round_introduced = round_of(*e.event_date, cfg.timeline);
    fakes_m.entries.push_back(std::move(e));
  }
  fakes_m.entries = merge_entries({fakes_m.entries});
  stamp(fakes_m);
  write_manifest(ctx.at(work_files::kItwFakes), fakes_m);
  outputs.push_back(work_files::kItwFakes);

  return json{{"itw_fakes", itw_fakes.size()},
              {"generator_fakes", gen_fakes.size()},
              {"paired_reals", itw_reals.size() + gen_reals.size()},
              {"rounds", rounds_summary},
              {"timeline_warnings", partition.warnings}};
}

std::vector<int> rounds_from_timeline(const Ctx& ctx) {
  std::vector<int> out;
  const json timeline = read_json(ctx.at(work_files::kTimeline));
  for (const auto& w : timeline.at("windows")) out.push_back(w.at("t").get<int>());
  return out;
}

// emit ---------------------------------------------------------------------------

json stage_emit(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  auto trainer = make_trainer_backend(cfg.backend_for("train"), ctx.at(work_files::kTrainerCalls));
  json jobs = json::array();
  std::vector<std::string> warnings;
  for (int t : rounds_from_timeline(ctx)) {
    const UpdateRound state = read_round_state(ctx.at(work_files::round_state(t)));
    const DatasetManifest m = read_manifest(ctx.at(work_files::round_manifest(t)));
    const TrainingJob job = emit_training_job(state, m, *trainer, cfg.hyperparameters, ctx.at(work_files::kJobs), &warnings);
    jobs.push_back(json{{"job_id", job.job_id}, {"manifest_hash", job.manifest_hash}});
  }
  outputs = {work_files::kJobs};
  if (fs::exists(ctx.at(work_files::kTrainerCalls))) outputs.push_back(work_files::kTrainerCalls);
  return json{{"jobs", jobs}, {"warnings", warnings}};
}

// eval ---------------------------------------------------------------------------

json stage_eval(Ctx& ctx, std::vector<std::string>& outputs) {
  const RunConfig& cfg = ctx.cfg;
  json summary = json::object();
  if (cfg.scores_file) {
    const auto records = read_score_file(*cfg.scores_file);
    const EvaluationReport rep = build_report(records, parse_groupings(cfg.groupings), cfg.thresholds.acc_threshold);
    write_json_file(ctx.at(work_files::kReportJson), to_json(rep));
    fs::create_directories(ctx.at(work_files::kReportText).parent_path());
    write_file_atomic(ctx.at(work_files::kReportText), render_table(rep));
    outputs.push_back(work_files::kReportJson);
    outputs.push_back(work_files::kReportText);
    summary["records"] = records.size();
    summary["datasets"] = rep.per_dataset.size();
  } else {
    summary["report"] = "skipped: eval.scores not configured";
  }

  const DatasetManifest fakes = read_manifest(ctx.at(work_files::kItwFakes));
  const std::uint64_t seed = cfg.seed("precision");
  if (cfg.annotations_file) {
    const PrecisionResult p = validation_precision(fakes, cfg.precision_fraction, seed, read_annotations(*cfg.annotations_file));
    write_json_file(ctx.at(work_files::kPrecision), json{{"population", p.population},
                                                         {"fraction", cfg.precision_fraction},
                                                         {"seed", seed},
                                                         {"sampled_n", p.sampled_n},
                                                         {"correct", p.correct},
                                                         {"precision", p.precision},
                                                         {"sample", p.sample}});
    outputs.push_back(work_files::kPrecision);
    summary["precision"] = p.precision;
    summary["sampled_n"] = p.sampled_n;
  } else {
    const auto sample = sample_for_validation(fakes, cfg.precision_fraction, seed);
    write_rows(ctx.at(work_files::kWorksheet), annotation_worksheet(fakes, sample));
    outputs.push_back(work_files::kWorksheet);
    summary["worksheet"] = sample.size();
  }
  return summary;
}

const std::vector<StageDef>& stage_defs() {
  auto none_ext = [](const Ctx&) { return std::vector<fs::path>{}; };
  static const std::vector<StageDef> defs{
      {"ingest", [](const Ctx&) { return std::vector<std::string>{}; }, none_ext, stage_ingest},
      {"extract", [](const Ctx&) { return fixed({work_files::kArticles}); },
       [](const Ctx& c) {
         return std::vector<fs::path>{c.cfg.templates_dir / (c.cfg.p1_ref + ".txt")};
       },
       stage_extract},
      {"score", [](const Ctx&) { return fixed({work_files::kDescriptions, work_files::kCandidates}); },
       [](const Ctx& c) {
         return std::vector<fs::path>{c.cfg.templates_dir / (c.cfg.p2_ref + ".txt")};
       },
       stage_score},
      {"expand", [](const Ctx&) { return fixed({work_files::kScored}); }, none_ext, stage_expand},
      {"segment", [](const Ctx&) { return fixed({work_files::kFinal}); }, none_ext, stage_segment},
      {"pair", [](const Ctx&) { return fixed({work_files::kFinal, work_files::kSegments, work_files::kRealPool}); },
       [](const Ctx& c) {
         std::vector<fs::path> v;
         if (c.cfg.registry_file) v.push_back(*c.cfg.registry_file);
         return v;
       },
       stage_pair},
      {"assemble",
       [](const Ctx&) {
         return fixed({work_files::kArticles, work_files::kFinal, work_files::kSegments, work_files::kPairs,
                       work_files::kRegistry, work_files::kRealPool});
       },
       [](const Ctx& c) {
         std::vector<fs::path> v;
         if (c.cfg.pretraining_manifest) v.push_back(*c.cfg.pretraining_manifest);
         return v;
       },
       stage_assemble},
      {"emit",
       [](const Ctx& c) {
         std::vector<std::string> v{work_files::kTimeline};
         if (fs::exists(c.at(work_files::kTimeline)))
           for (int t : rounds_from_timeline(c)) {
             v.push_back(work_files::round_state(t));
             v.push_back(work_files::round_manifest(t));
           }
         return v;
       },
       none_ext, stage_emit},
      {"eval", [](const Ctx&) { return fixed({work_files::kItwFakes}); },
       [](const Ctx& c) {
         std::vector<fs::path> v;
         if (c.cfg.scores_file) v.push_back(*c.cfg.scores_file);
         if (c.cfg.annotations_file) v.push_back(*c.cfg.annotations_file);
         return v;
       },
       stage_eval},
  };
  return defs;
}

const char* producer_of(const std::string& rel) {
  static const std::map<std::string, const char*> producers{
      {work_files::kArticles, "ingest"},   {work_files::kRealPool, "ingest"},   {work_files::kDescriptions, "extract"},
      {work_files::kCandidates, "extract"}, {work_files::kScored, "score"},      {work_files::kFinal, "expand"},
      {work_files::kSegments, "segment"},  {work_files::kPairs, "pair"},        {work_files::kRegistry, "pair"},
      {work_files::kTimeline, "assemble"}, {work_files::kItwFakes, "assemble"}};
  auto it = producers.find(rel);
  return it == producers.end() ? "assemble" : it->second;
}

}  // namespace

RunResult run_pipeline(const RunConfig& cfg, const RunOptions& opts) {
  if (opts.stages.empty()) throw ConfigError("no stages requested");
  fs::create_directories(cfg.work_dir);
  StoreLock lock(cfg.store_dir);
  Ctx ctx{cfg, ContentStore(cfg.store_dir), cfg.work_dir};
  const fs::path ledger_path = ctx.at(work_files::kLedger);
  std::vector<json> ledger;
  if (fs::exists(ledger_path)) ledger = read_jsonl(ledger_path);

  RunResult result;
  for (const auto& name : opts.stages) {
    const auto def = std::find_if(stage_defs().begin(), stage_defs().end(), [&](const StageDef& d) { return d.name == name; });
    if (def == stage_defs().end()) throw ConfigError("unknown stage '" + name + "'");

    json inputs = json::object();
    for (const auto& rel : def->inputs(ctx)) {
      if (!fs::exists(ctx.at(rel)))
        throw MissingInputError("stage " + name + " needs " + rel + " from stage " + producer_of(rel) + "; run it first");
      inputs[rel] = file_hash(ctx.at(rel));
    }
    for (const auto& p : def->external(ctx)) {
      if (!fs::exists(p)) throw MissingInputError("stage " + name + " needs " + p.string());
      inputs[p.string()] = file_hash(p);
    }
    const std::string fingerprint = sha256_hex(cfg.config_hash + "\n" + name + "\n" + inputs.dump());

    const json* last = nullptr;
    for (const auto& rec : ledger)
      if (rec.value("stage", std::string{}) == name && rec.contains("outputs")) last = &rec;

    if (last && !opts.force) {
      bool intact = true;
      bool any_output = false;
      for (const auto& [rel, hash] : (*last)["outputs"].items()) {
        if (!fs::exists(ctx.at(rel))) {
          intact = false;
          continue;
        }
        any_output = true;
        if (file_hash(ctx.at(rel)) != hash.get<std::string>()) intact = false;
      }
      if (last->value("fingerprint", std::string{}) == fingerprint && intact) {
        json rec{{"stage", name},           {"status", "cache_hit"},   {"config_hash", cfg.config_hash},
                 {"fingerprint", fingerprint}, {"inputs", inputs},      {"outputs", (*last)["outputs"]},
                 {"at", cfg.as_of.to_string()}, {"summary", (*last)["summary"]}};
        ledger.push_back(rec);
        write_jsonl(ledger_path, ledger);
        spdlog::info("stage {}: cache hit", name);
        result.stages.push_back(StageReport{name, "cache_hit", (*last)["summary"]});
        ++result.cache_hits;
        continue;
      }
      if (any_output && last->value("config_hash", std::string{}) != cfg.config_hash)
        throw StaleCacheError("outputs of stage " + name + " were produced under config " +
                              last->value("config_hash", std::string{}).substr(0, 12) + ", current config is " +
                              cfg.config_hash.substr(0, 12) + "; rerun with --force");
    }

    spdlog::info("stage {}: running", name);
    std::vector<std::string> outputs;
    const json summary = def->run(ctx, outputs);
    json out_hashes = json::object();
    for (const auto& rel : outputs) out_hashes[rel] = file_hash(ctx.at(rel));
    json rec{{"stage", name},           {"status", "done"},        {"config_hash", cfg.config_hash},
             {"fingerprint", fingerprint}, {"inputs", inputs},      {"outputs", out_hashes},
             {"at", cfg.as_of.to_string()}, {"summary", summary}};
    ledger.push_back(rec);
    write_jsonl(ledger_path, ledger);
    result.stages.push_back(StageReport{name, "done", summary});
    ++result.executed;
  }
  return result;
}

}  // namespace wildharvest
