#include <gtest/gtest.h>

#include <cstdlib>

#include "test_support.hpp"
#include "wildharvest/errors.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/pipeline.hpp"

using namespace wildharvest;
using namespace wildharvest::testing;
namespace fs = std::filesystem;

namespace {

json fixture_doc() { return read_json(corpus_dir() / "run.json"); }

RunConfig fixture_config(const TempDir& dir, ConfigOverrides o = {}) {
  o.store = dir / "store";
  o.work = dir / "work";
  return load_run_config(corpus_dir() / "run.json", o);
}

RunResult run_all(const RunConfig& cfg, bool force = false) {
  return run_pipeline(cfg, RunOptions{pipeline_stages(), force});
}

}  // namespace

TEST(Config, FixtureLoads) {
  TempDir dir;
  const auto cfg = fixture_config(dir);
  EXPECT_EQ(cfg.thresholds.tau_anchor, 0.8);
  EXPECT_EQ(cfg.backend_for("embed").dim, 16);
  EXPECT_EQ(cfg.timeline.rounds, 4);
  EXPECT_EQ(cfg.store_dir, dir / "store");
  EXPECT_EQ(cfg.seed("pair"), cfg.seed("pair"));
  EXPECT_NE(cfg.seed("pair"), cfg.seed("assemble"));
}

TEST(Config, HashIgnoresStoreAndWorkPaths) {
  json a = fixture_doc(), b = fixture_doc();
  b["paths"]["store"] = "/elsewhere";
  b["paths"]["work"] = "/elsewhere/work";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["thresholds"]["tau_sim"] = 0.7;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, Rejections) {
  const fs::path base = corpus_dir();
  auto expect_config_error = [&](const std::function<void(json&)>& edit) {
    json doc = fixture_doc();
    edit(doc);
    EXPECT_THROW(run_config_from_json(doc, base), ConfigError) << doc.dump().substr(0, 80);
  };
  expect_config_error([](json& d) { d["surprise"] = true; });
  expect_config_error([](json& d) { d["format"] = "other"; });
  expect_config_error([](json& d) { d["version"] = 2; });
  expect_config_error([](json& d) { d["stage_backends"].erase("score"); });
  expect_config_error([](json& d) { d["backends"]["embedder"]["dim"] = 0; });
  expect_config_error([](json& d) { d["thresholds"]["tau_anchor"] = 1.5; });
  expect_config_error([](json& d) { d["as_of"] = "tomorrow"; });
  expect_config_error([](json& d) { d["stage_backends"]["extract"] = "ghost"; });
}

TEST(Config, OverridesAndEnvironment) {
  TempDir dir;
  ConfigOverrides o;
  o.rho = 0.1;
  o.seed = 99;
  const auto cfg = load_run_config(corpus_dir() / "run.json", o);
  EXPECT_EQ(cfg.thresholds.replay_rho, 0.1);
  EXPECT_EQ(cfg.seeds.at("base"), 99u);

  ::setenv("WILDHARVEST_STORE", (dir / "env-store").c_str(), 1);
  const auto env_cfg = load_run_config(corpus_dir() / "run.json");
  ConfigOverrides flag;
  flag.store = dir / "flag-store";
  const auto flag_cfg = load_run_config(corpus_dir() / "run.json", flag);
  ::unsetenv("WILDHARVEST_STORE");
  EXPECT_EQ(env_cfg.store_dir, dir / "env-store");
  EXPECT_EQ(flag_cfg.store_dir, dir / "flag-store");
}

TEST(Stages, Parsing) {
  EXPECT_EQ(parse_stages("all"), pipeline_stages());
  EXPECT_EQ(parse_stages("ingest,extract"), (std::vector<std::string>{"ingest", "extract"}));
  EXPECT_THROW(parse_stages("ingest,bake"), ConfigError);
}

TEST(Pipeline, StoreLockIsExclusive) {
  TempDir dir;
  const auto cfg = fixture_config(dir);
  fs::create_directories(cfg.store_dir);
  {
    StoreLock held(cfg.store_dir);
    EXPECT_THROW(StoreLock second(cfg.store_dir), LockError);
    EXPECT_THROW(run_pipeline(cfg, RunOptions{{"ingest"}, false}), LockError);
  }
  EXPECT_NO_THROW(StoreLock again(cfg.store_dir));
}

TEST(Pipeline, MissingInputNamesProducer) {
  TempDir dir;
  const auto cfg = fixture_config(dir);
  try {
    run_pipeline(cfg, RunOptions{{"pair"}, false});
    FAIL();
  } catch (const MissingInputError& e) {
    EXPECT_NE(std::string(e.what()).find("from stage expand"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, EndToEndCacheStaleAndForce) {
  TempDir dir;
  const auto cfg = fixture_config(dir);
  const auto first = run_all(cfg);
  EXPECT_EQ(first.executed, 9);
  EXPECT_EQ(first.cache_hits, 0);
  for (int t = 1; t <= 4; ++t) EXPECT_TRUE(fs::exists(cfg.work_dir / work_files::round_manifest(t)));
  EXPECT_EQ(read_jsonl(cfg.work_dir / work_files::kJobs).size(), 4u);
  EXPECT_TRUE(fs::exists(cfg.work_dir / work_files::kPrecision));

  const auto second = run_all(cfg);
  EXPECT_EQ(second.executed, 0);
  EXPECT_EQ(second.cache_hits, 9);

  // A touched output reruns its stage and everything downstream of changed inputs.
  const std::string before = read_text(cfg.work_dir / work_files::round_manifest(4));
  write_file_atomic(cfg.work_dir / work_files::kSegments, "");
  const auto third = run_all(cfg);
  EXPECT_GE(third.executed, 1);
  EXPECT_EQ(read_text(cfg.work_dir / work_files::round_manifest(4)), before);

  ConfigOverrides changed;
  changed.rho = 0.1;
  const auto stale = fixture_config(dir, changed);
  EXPECT_THROW(run_all(stale), StaleCacheError);
  const auto forced = run_all(stale, true);
  EXPECT_EQ(forced.executed, 9);
  EXPECT_NE(read_text(cfg.work_dir / work_files::round_manifest(4)), before);
}

TEST(Pipeline, DifferentSeedChangesAssembly) {
  TempDir a, b;
  ConfigOverrides o;
  o.seed = 8;
  const auto cfg_a = fixture_config(a);
  const auto cfg_b = fixture_config(b, o);
  run_all(cfg_a);
  run_all(cfg_b);
  const auto ma = read_manifest(cfg_a.work_dir / work_files::round_manifest(3));
  const auto mb = read_manifest(cfg_b.work_dir / work_files::round_manifest(3));
  EXPECT_NE(manifest_hash(ma), manifest_hash(mb));
}

TEST(Pipeline, AssembledRoundsAreWellFormed) {
  TempDir dir;
  const auto cfg = fixture_config(dir);
  run_all(cfg);
  ContentStore store(cfg.store_dir);
  std::set<std::string> seen_before;
  for (int t = 1; t <= 4; ++t) {
    const auto m = read_manifest(cfg.work_dir / work_files::round_manifest(t));
    EXPECT_EQ(m.round, t);
    EXPECT_EQ(m.config_hash, cfg.config_hash);
    int reals = 0, fakes = 0;
    for (const auto& e : m.entries) {
      EXPECT_TRUE(store.contains(e.image_id));
      EXPECT_FALSE(e.provenance.empty());
      if (e.origin == Origin::replay) {
        EXPECT_LT(e.round_introduced, t);
        EXPECT_TRUE(seen_before.count(e.image_id)) << "replay of an image never seen before";
      } else {
        EXPECT_EQ(e.round_introduced, t);
      }
      (e.label == kLabelReal ? reals : fakes)++;
    }
    EXPECT_GT(reals, 0);
    EXPECT_GT(fakes, 0);
    for (const auto& e : m.entries) seen_before.insert(e.image_id);
  }
}
