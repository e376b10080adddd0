// wildharvest: command-line entry point for every pipeline stage.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/evaluation.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/pipeline.hpp"
#include "wildharvest/records.hpp"
#include "wildharvest/retrieval.hpp"

namespace fs = std::filesystem;
using namespace wildharvest;

namespace {

struct Common {
  std::string config;
  std::optional<std::string> store;
  std::optional<std::string> work;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "Run configuration file");
  if (config_required) opt->required();
  cmd->add_option("--store", c.store, "Content store directory (overrides config and WILDHARVEST_STORE)");
  cmd->add_option("--work", c.work, "Work directory for stage outputs");
}

ConfigOverrides overrides_of(const Common& c) {
  ConfigOverrides o;
  if (c.store) o.store = fs::path(*c.store);
  if (c.work) o.work = fs::path(*c.work);
  return o;
}

/// Loads the config file, applies `patch` (merged into the document), then validates.
RunConfig load_patched(const Common& c, const json& patch = json::object(), ConfigOverrides o = {}) {
  const fs::path file = c.config;
  if (!fs::exists(file)) throw ConfigError("config file " + file.string() + " does not exist");
  json doc;
  try {
    doc = json::parse(read_text(file));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  doc.merge_patch(patch);
  const ConfigOverrides base = overrides_of(c);
  if (base.store) o.store = base.store;
  if (base.work) o.work = base.work;
  return run_config_from_json(std::move(doc), fs::absolute(file).parent_path(), o);
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

json run_stages(const RunConfig& cfg, const std::vector<std::string>& stages, bool force) {
  const RunResult r = run_pipeline(cfg, RunOptions{stages, force});
  json out{{"config_hash", cfg.config_hash},
           {"work", cfg.work_dir.string()},
           {"executed", r.executed},
           {"cache_hits", r.cache_hits},
           {"stages", json::array()}};
  for (const auto& s : r.stages) out["stages"].push_back(json{{"stage", s.stage}, {"status", s.status}, {"summary", s.summary}});
  return out;
}

/// Places `src` at `<work>/<rel>` unless it already is that file.
void stage_input(const RunConfig& cfg, const std::optional<std::string>& src, const char* rel) {
  if (!src) return;
  const fs::path dst = cfg.work_dir / rel;
  fs::create_directories(dst.parent_path());
  if (fs::exists(dst) && fs::equivalent(*src, dst)) return;
  fs::copy_file(*src, dst, fs::copy_options::overwrite_existing);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Image ids of a manifest (filtered by label) or of a real-pool record file.
std::vector<std::string> ids_from(const fs::path& p, int label) {
  std::vector<std::string> ids;
  const std::string text = read_text(p);
  if (text.find("\"wildharvest.manifest\"") != std::string::npos) {
    for (const auto& e : deserialize_manifest(text).entries)
      if (e.label == label) ids.push_back(e.image_id);
  } else {
    for (const auto& row : parse_jsonl(text)) ids.push_back(require_string(row, "image_id"));
  }
  sort_unique(ids);
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("wildharvest"));
  CLI::App app{"wildharvest: continual data collection for generated-image detection"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::function<void()> action;
  Common common;

  // ingest ---------------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Collect fact-check articles or the real-image pool");
  ingest->require_subcommand(1);
  std::optional<std::string> adapter, query, from, to, out;
  std::string adapters;
  auto* ing_articles = ingest->add_subcommand("articles", "Fetch fact-check articles");
  add_common(ing_articles, common);
  ing_articles->add_option("--adapter", adapter, "Article adapter name");
  ing_articles->add_option("--query", query, "Search query");
  ing_articles->add_option("--from", from, "First publication date (YYYY-MM-DD)");
  ing_articles->add_option("--to", to, "Last publication date (YYYY-MM-DD)");
  ing_articles->add_option("--out", out, "Article record file (default <work>/articles.jsonl)");
  ing_articles->callback([&] {
    action = [&] {
      RunConfig cfg = load_patched(common);
      const std::string name = adapter.value_or(cfg.article_adapter);
      if (!cfg.adapters.count(name)) throw ConfigError("unknown adapter '" + name + "'");
      DateRange range = cfg.date_range;
      if (from) range.from = Date::parse(*from);
      if (to) range.to = Date::parse(*to);
      auto src = open_source(cfg.adapters.at(name), cfg.base_dir);
      const ArticleFetch af = fetch_articles(*src, query.value_or(cfg.query), range, cfg.as_of);
      const fs::path dst = out ? fs::path(*out) : cfg.work_dir / work_files::kArticles;
      fs::create_directories(fs::absolute(dst).parent_path());
      write_records(dst, af.articles);
      print(json{{"articles", af.articles.size()}, {"payload_errors", af.payload_errors}, {"out", dst.string()}});
    };
  });
  auto* ing_pool = ingest->add_subcommand("real-pool", "Fetch the real-image pool");
  add_common(ing_pool, common);
  ing_pool->add_option("--adapters", adapters, "Comma-separated real-pool adapters");
  ing_pool->add_option("--from", from, "First publication date");
  ing_pool->add_option("--to", to, "Last publication date");
  ing_pool->add_option("--out", out, "Real-pool record file (default <work>/real_pool.jsonl)");
  ing_pool->callback([&] {
    action = [&] {
      RunConfig cfg = load_patched(common);
      const auto names = adapters.empty() ? cfg.real_pool_adapters : split_list(adapters);
      DateRange range = cfg.real_pool_range;
      if (from) range.from = Date::parse(*from);
      if (to) range.to = Date::parse(*to);
      std::vector<std::unique_ptr<RecordSource>> owned;
      std::vector<RecordSource*> ptrs;
      for (const auto& n : names) {
        if (!cfg.adapters.count(n)) throw ConfigError("unknown adapter '" + n + "'");
        owned.push_back(open_source(cfg.adapters.at(n), cfg.base_dir));
        ptrs.push_back(owned.back().get());
      }
      StoreLock lock(cfg.store_dir);
      ContentStore store(cfg.store_dir);
      const RealPool pool = fetch_real_pool(ptrs, range, store, cfg.exclude_terms);
      const fs::path dst = out ? fs::path(*out) : cfg.work_dir / work_files::kRealPool;
      fs::create_directories(fs::absolute(dst).parent_path());
      write_records(dst, pool.images);
      print(json{{"images", pool.images.size()},
                 {"per_source", pool.per_source_counts},
                 {"per_adapter", pool.per_adapter_counts},
                 {"duplicates_dropped", pool.duplicates_dropped},
                 {"skipped", pool.skips.size()},
                 {"warnings", pool.warnings},
                 {"out", dst.string()}});
    };
  });

  // extract --------------------------------------------------------------------------
  std::optional<std::string> corpus, backend, templ;
  bool force = false;
  auto* extract = app.add_subcommand("extract", "Extract image descriptions from articles and collect candidates");
  add_common(extract, common);
  extract->add_option("--corpus", corpus, "Article record file (default <work>/articles.jsonl)");
  extract->add_option("--backend", backend, "Text backend name");
  extract->add_option("--template", templ, "Prompt template reference, e.g. p1@v1");
  extract->add_flag("--force", force, "Recompute even when cached outputs exist");
  extract->callback([&] {
    action = [&] {
      json patch = json::object();
      if (backend) patch["stage_backends"]["extract"] = *backend;
      if (templ) patch["templates"]["p1"] = *templ;
      RunConfig cfg = load_patched(common, patch);
      stage_input(cfg, corpus, work_files::kArticles);
      print(run_stages(cfg, {"extract"}, force));
    };
  });

  // retrieve -------------------------------------------------------------------------
  auto* retrieve = app.add_subcommand("retrieve", "Anchor scoring, similarity expansion and segmentation");
  retrieve->require_subcommand(1);
  std::optional<double> tau_anchor, tau_sim, seg_threshold;
  std::optional<std::string> scored_file;
  auto* r_score = retrieve->add_subcommand("score", "Score candidates against their article's descriptions");
  add_common(r_score, common);
  r_score->add_option("--backend", backend, "Scorer backend name");
  r_score->add_option("--template", templ, "Prompt template reference, e.g. p2@v1");
  r_score->add_flag("--force", force, "Recompute even when cached outputs exist");
  r_score->callback([&] {
    action = [&] {
      json patch = json::object();
      if (backend) patch["stage_backends"]["score"] = *backend;
      if (templ) patch["templates"]["p2"] = *templ;
      print(run_stages(load_patched(common, patch), {"score"}, force));
    };
  });
  auto* r_anchors = retrieve->add_subcommand("anchors", "List anchors per article from a scored file");
  add_common(r_anchors, common, false);
  r_anchors->add_option("--scored", scored_file, "Scored candidate file (default <work>/scored.jsonl)");
  r_anchors->add_option("--tau", tau_anchor, "Anchor threshold (default from config, else 0.8)");
  r_anchors->callback([&] {
    action = [&] {
      ThresholdConfig t;
      fs::path file;
      if (!common.config.empty()) {
        const RunConfig cfg = load_patched(common);
        t = cfg.thresholds;
        file = cfg.work_dir / work_files::kScored;
      }
      if (scored_file) file = *scored_file;
      if (file.empty()) throw ConfigError("give --scored or --config");
      if (tau_anchor) t.tau_anchor = *tau_anchor;
      t.validate();
      std::map<std::string, std::vector<ScoredCandidate>> by_article;
      for (auto& s : read_records<ScoredCandidate>(file, scored_from_json)) by_article[s.article_id].push_back(s);
      json res = json::object();
      for (const auto& [a, v] : by_article) res[a] = select_anchors(v, t);
      print(json{{"tau_anchor", t.tau_anchor}, {"anchors", res}});
    };
  });
  auto* r_expand = retrieve->add_subcommand("expand", "Similarity expansion around anchors");
  add_common(r_expand, common);
  r_expand->add_option("--tau-anchor", tau_anchor, "Anchor threshold");
  r_expand->add_option("--tau-sim", tau_sim, "Similarity threshold");
  r_expand->add_flag("--force", force, "Recompute even when cached outputs exist");
  r_expand->callback([&] {
    action = [&] {
      json patch = json::object();
      if (tau_anchor) patch["thresholds"]["tau_anchor"] = *tau_anchor;
      if (tau_sim) patch["thresholds"]["tau_sim"] = *tau_sim;
      print(run_stages(load_patched(common, patch), {"expand"}, force));
    };
  });
  auto* r_segment = retrieve->add_subcommand("segment", "Crop generated regions out of the final images");
  add_common(r_segment, common);
  r_segment->add_option("--threshold", seg_threshold, "Segmentation confidence threshold");
  r_segment->add_flag("--force", force, "Recompute even when cached outputs exist");
  r_segment->callback([&] {
    action = [&] {
      json patch = json::object();
      if (seg_threshold) patch["thresholds"]["seg_threshold"] = *seg_threshold;
      print(run_stages(load_patched(common, patch), {"segment"}, force));
    };
  });

  // pair -----------------------------------------------------------------------------
  std::optional<std::string> fakes_file, pool_file;
  std::optional<std::size_t> k, per_fake;
  bool global_nr = false, independent = false;
  auto* pair = app.add_subcommand("pair", "Match every generated image to its most similar real images");
  add_common(pair, common);
  pair->add_option("--fakes", fakes_file, "Manifest of generated images (label 1 entries are used)");
  pair->add_option("--pool", pool_file, "Manifest (label 0 entries) or real-pool record file");
  pair->add_option("--k", k, "Candidate list length per fake");
  pair->add_option("--per-fake", per_fake, "Real images assigned to each fake");
  pair->add_flag("--global-no-replacement", global_nr, "Never reuse a real image across fakes (default)");
  pair->add_flag("--independent", independent, "Allow a real image to serve several fakes");
  pair->add_option("--out", out, "Pair file (direct mode only)");
  pair->add_flag("--force", force, "Recompute even when cached outputs exist");
  pair->callback([&] {
    action = [&] {
      if (global_nr && independent) throw ConfigError("--global-no-replacement and --independent exclude each other");
      json patch = json::object();
      if (k) patch["pairing"]["k"] = *k;
      if (per_fake) patch["pairing"]["reals_per_fake"] = *per_fake;
      if (global_nr || independent) patch["pairing"]["global_without_replacement"] = global_nr;
      RunConfig cfg = load_patched(common, patch);
      if (!fakes_file && !pool_file) {
        print(run_stages(cfg, {"pair"}, force));
        return;
      }
      if (!fakes_file || !pool_file) throw ConfigError("direct pairing needs both --fakes and --pool");
      const auto fakes = ids_from(*fakes_file, kLabelGenerated);
      const auto reals = ids_from(*pool_file, kLabelReal);
      ContentStore store(cfg.store_dir);
      auto f = make_embedding_backend(cfg.backend_for("embed"), cfg.base_dir);
      EmbeddingCache cache;
      const ImageLoader load = store_loader(store);
      const RealPoolIndex idx(embed_all(reals, load, *f, &cache));
      const auto pairs = assign_pairs(fakes, embed_all(fakes, load, *f, &cache), idx, cfg.pairing);
      const fs::path dst = out ? fs::path(*out) : cfg.work_dir / work_files::kPairs;
      fs::create_directories(fs::absolute(dst).parent_path());
      write_jsonl(dst, pairs_to_rows(pairs));
      print(json{{"fakes", fakes.size()}, {"pool", reals.size()}, {"pairs", pairs.size()}, {"out", dst.string()}});
    };
  });

  // round ----------------------------------------------------------------------------
  auto* round = app.add_subcommand("round", "Assemble update rounds and emit training jobs");
  round->require_subcommand(1);
  int t = 0;
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;
  auto* r_assemble = round->add_subcommand("assemble", "Assemble the round manifests");
  add_common(r_assemble, common);
  r_assemble->add_option("--t", t, "Round to report (all rounds are assembled together)")->required();
  r_assemble->add_option("--rho", rho, "Replay proportion");
  r_assemble->add_option("--seed", seed, "Seed for assembly and replay sampling");
  r_assemble->add_flag("--force", force, "Recompute even when cached outputs exist");
  r_assemble->callback([&] {
    action = [&] {
      json patch = json::object();
      if (rho) patch["thresholds"]["replay_rho"] = *rho;
      if (seed) patch["seeds"]["assemble"] = *seed;
      RunConfig cfg = load_patched(common, patch);
      json res = run_stages(cfg, {"assemble"}, force);
      const fs::path m = cfg.work_dir / work_files::round_manifest(t);
      if (!fs::exists(m)) throw MissingInputError("round " + std::to_string(t) + " was not assembled");
      const DatasetManifest dm = read_manifest(m);
      res["round"] = json{{"t", t}, {"manifest", m.string()}, {"entries", dm.entries.size()}, {"manifest_hash", manifest_hash(dm)}};
      print(res);
    };
  });
  auto* r_emit = round->add_subcommand("emit", "Submit the training job for one assembled round");
  add_common(r_emit, common);
  r_emit->add_option("--t", t, "Round")->required();
  r_emit->add_option("--backend", backend, "Trainer backend name or endpoint (mock:, mock:reject, http(s)://...)");
  r_emit->callback([&] {
    action = [&] {
      json patch = json::object();
      if (backend) {
        const json base = read_json(common.config);
        if (base.contains("backends") && base["backends"].contains(*backend)) {
          patch["stage_backends"]["train"] = *backend;
        } else {
          patch["backends"]["cli-trainer"] = json{{"endpoint", *backend}};
          patch["stage_backends"]["train"] = "cli-trainer";
        }
      }
      RunConfig cfg = load_patched(common, patch);
      const fs::path state_file = cfg.work_dir / work_files::round_state(t);
      const fs::path manifest_file = cfg.work_dir / work_files::round_manifest(t);
      if (!fs::exists(state_file) || !fs::exists(manifest_file))
        throw MissingInputError("round " + std::to_string(t) + " has not been assembled; run 'round assemble' first");
      auto trainer = make_trainer_backend(cfg.backend_for("train"), cfg.work_dir / work_files::kTrainerCalls);
      std::vector<std::string> warnings;
      const TrainingJob job = emit_training_job(read_round_state(state_file), read_manifest(manifest_file), *trainer,
                                                cfg.hyperparameters, cfg.work_dir / work_files::kJobs, &warnings);
      json res = to_json(job);
      res["warnings"] = warnings;
      print(res);
    };
  });

  // registry -------------------------------------------------------------------------
  auto* registry = app.add_subcommand("registry", "Generator registry");
  registry->require_subcommand(1);
  std::string registry_file;
  std::uint64_t registry_seed = 0;
  bool lenient = false;
  auto* reg_load = registry->add_subcommand("load", "Parse and validate a generator registry");
  reg_load->add_option("file", registry_file, "Registry file")->required();
  reg_load->add_option("--seed", registry_seed, "Seed for train/test membership");
  reg_load->add_flag("--lenient", lenient, "Report bad rows instead of failing");
  reg_load->add_option("--store", common.store, "Store listed image files in this content store");
  reg_load->callback([&] {
    action = [&] {
      std::optional<ContentStore> store;
      if (common.store) store.emplace(*common.store);
      const auto reg = register_generators(registry_file, registry_seed,
                                           lenient ? RegistryMode::lenient : RegistryMode::strict,
                                           store ? &*store : nullptr);
      json res = to_json(reg);
      int size = 0, train = 0, test = 0;
      for (const auto& r : reg.rows) {
        size += r.size;
        train += r.train;
        test += r.test;
      }
      res["totals"] = json{{"size", size}, {"train", train}, {"test", test}};
      print(res);
    };
  });

  // timeline -------------------------------------------------------------------------
  auto* timeline = app.add_subcommand("timeline", "Chronological task windows");
  timeline->require_subcommand(1);
  int interval = 3;
  std::string anchor = "2025-01-01";
  std::optional<int> rounds;
  std::string manifest_file;
  auto* tl_part = timeline->add_subcommand("partition", "Assign manifest entries to rounds");
  tl_part->add_option("--manifest", manifest_file, "Manifest to partition")->required();
  tl_part->add_option("--interval", interval, "Window length in months");
  tl_part->add_option("--anchor", anchor, "Start of round 1 (YYYY-MM-DD)");
  tl_part->add_option("--rounds", rounds, "Fixed number of rounds");
  tl_part->callback([&] {
    action = [&] {
      TimelineConfig tc;
      tc.interval_months = interval;
      tc.anchor = Date::parse(anchor);
      tc.rounds = rounds;
      const auto p = partition_timeline(read_manifest(manifest_file).entries, tc);
      json windows = json::array();
      for (const auto& w : p.windows) {
        const auto it = p.assignment.find(w.t);
        windows.push_back(json{{"t", w.t},
                               {"start", w.start.to_string()},
                               {"end", w.end.to_string()},
                               {"entries", it == p.assignment.end() ? 0 : it->second.size()}});
      }
      print(json{{"windows", windows}, {"warnings", p.warnings}});
    };
  });

  // eval -----------------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Detector evaluation and dataset precision");
  eval->require_subcommand(1);
  std::string scores_file, groups = "dataset,generator,task", annotations_file;
  double threshold = 0.5, fraction = 0.104;
  std::uint64_t eval_seed = 7;
  std::optional<std::string> table_out;
  auto* ev_report = eval->add_subcommand("report", "AUC / ACC tables from a score file");
  ev_report->add_option("--scores", scores_file, "Score file")->required();
  ev_report->add_option("--group", groups, "Groupings: dataset,generator,task");
  ev_report->add_option("--threshold", threshold, "ACC decision threshold");
  ev_report->add_option("--out", out, "Write the machine-readable report here");
  ev_report->add_option("--table", table_out, "Write the text table here instead of stdout");
  ev_report->callback([&] {
    action = [&] {
      const auto rep = build_report(read_score_file(scores_file), parse_groupings(groups), threshold);
      if (out) write_file_atomic(*out, to_json(rep).dump(2) + "\n");
      if (table_out) write_file_atomic(*table_out, render_table(rep));
      else std::cout << render_table(rep);
    };
  });
  auto* ev_prec = eval->add_subcommand("precision", "Precision of a manifest over a seeded annotated sample");
  ev_prec->add_option("--manifest", manifest_file, "Manifest of collected images")->required();
  ev_prec->add_option("--fraction", fraction, "Sampling fraction");
  ev_prec->add_option("--seed", eval_seed, "Sampling seed");
  ev_prec->add_option("--annotations", annotations_file, "Annotation file; without it a worksheet is printed");
  ev_prec->callback([&] {
    action = [&] {
      const DatasetManifest m = read_manifest(manifest_file);
      if (annotations_file.empty()) {
        for (const auto& row : annotation_worksheet(m, sample_for_validation(m, fraction, eval_seed)))
          std::cout << dump_line(row) << "\n";
        return;
      }
      const auto p = validation_precision(m, fraction, eval_seed, read_annotations(annotations_file));
      print(json{{"population", p.population},
                 {"fraction", fraction},
                 {"seed", eval_seed},
                 {"sampled_n", p.sampled_n},
                 {"correct", p.correct},
                 {"precision", p.precision}});
    };
  });

  // run ------------------------------------------------------------------------------
  std::string stages = "all";
  auto* run = app.add_subcommand("run", "Run a chain of stages from a config file");
  add_common(run, common);
  run->add_option("--stages", stages, "all or a comma-separated list of stages");
  run->add_option("--rho", rho, "Replay proportion override");
  run->add_option("--seed", seed, "Base seed override");
  run->add_flag("--force", force, "Recompute even when cached outputs exist");
  run->callback([&] {
    action = [&] {
      ConfigOverrides o;
      o.rho = rho;
      o.seed = seed;
      RunConfig cfg = load_patched(common, json::object(), o);
      print(run_stages(cfg, parse_stages(stages), force));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    action();
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    spdlog::error("malformed JSON: {}", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 4;
  }
}
