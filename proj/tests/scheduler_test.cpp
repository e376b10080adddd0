#include <gtest/gtest.h>

#include "test_support.hpp"
#include "wildharvest/errors.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/scheduler.hpp"

using namespace wildharvest;
using namespace wildharvest::testing;

namespace {

std::vector<DatasetEntry> pool_of(int n_fake, int n_real, int round = 1) {
  std::vector<DatasetEntry> v;
  for (int i = 0; i < n_fake; ++i) v.push_back(entry("f" + std::to_string(i), kLabelGenerated, Origin::itw, Date(2025, 1, 5), round));
  for (int i = 0; i < n_real; ++i) v.push_back(entry("r" + std::to_string(i), kLabelReal, Origin::real_pool, Date(2025, 1, 5), round));
  return v;
}

DatasetManifest manifest_of(const std::string& id, int round, std::vector<DatasetEntry> entries) {
  DatasetManifest m;
  m.manifest_id = id;
  m.round = round;
  m.entries = std::move(entries);
  return m;
}

BackendDescriptor trainer_descriptor(const std::string& endpoint) {
  BackendDescriptor d;
  d.backend_name = "trainer";
  d.endpoint = endpoint;
  return d;
}

}  // namespace

TEST(Timeline, WindowsAndBoundaries) {
  TimelineConfig cfg;
  EXPECT_EQ(window_for(1, cfg), (RoundWindow{1, Date(2025, 1, 1), Date(2025, 3, 31)}));
  EXPECT_EQ(window_for(4, cfg).end, Date(2025, 12, 31));
  EXPECT_EQ(round_of(Date(2025, 3, 31), cfg), 1);
  EXPECT_EQ(round_of(Date(2025, 4, 1), cfg), 2);
  EXPECT_EQ(round_of(Date(2026, 1, 1), cfg), 5);
  EXPECT_EQ(round_of(Date(2024, 6, 1), cfg), 1);
  EXPECT_THROW(window_for(0, cfg), TimelineError);
  cfg.interval_months = 0;
  EXPECT_THROW(round_of(Date(2025, 1, 1), cfg), ConfigError);
}

TEST(Timeline, MonthEndAnchor) {
  TimelineConfig cfg;
  cfg.anchor = Date(2025, 1, 31);
  cfg.interval_months = 1;
  const auto w2 = window_for(2, cfg);
  EXPECT_EQ(w2.start, Date(2025, 2, 28));
  EXPECT_EQ(round_of(Date(2025, 2, 27), cfg), 1);
  EXPECT_EQ(round_of(Date(2025, 2, 28), cfg), 2);
}

TEST(Timeline, PartitionWarningsAndErrors) {
  TimelineConfig cfg;
  cfg.rounds = 4;
  std::vector<DatasetEntry> v = {entry("a", 1, Origin::itw, Date(2024, 12, 1)), entry("b", 1, Origin::itw, Date(2025, 8, 1))};
  const auto p = partition_timeline(v, cfg);
  EXPECT_EQ(p.windows.size(), 4u);
  EXPECT_EQ(p.assignment.at(1).size(), 1u);
  EXPECT_EQ(p.assignment.at(3).size(), 1u);
  // One pre-anchor warning, two empty rounds.
  EXPECT_EQ(p.warnings.size(), 3u);

  v.push_back(entry("late", 1, Origin::itw, Date(2026, 2, 1)));
  EXPECT_THROW(partition_timeline(v, cfg), TimelineError);

  auto undated = entry("u", 1, Origin::itw, Date(2025, 1, 1));
  undated.event_date.reset();
  try {
    partition_timeline({undated}, cfg);
    FAIL();
  } catch (const UndatedEntryError& e) {
    EXPECT_EQ(e.ids(), (std::vector<std::string>{undated.image_id}));
  }
}

TEST(Replay, SizeIsFloor) {
  EXPECT_EQ(replay_size(0.05, 100), 5u);
  EXPECT_EQ(replay_size(0.05, 99), 4u);
  EXPECT_EQ(replay_size(0.29, 100), 29u);
  EXPECT_EQ(replay_size(0.0, 100), 0u);
  EXPECT_EQ(replay_size(1.0, 7), 7u);
  EXPECT_THROW(replay_size(1.5, 7), ConfigError);
}

TEST(Replay, StratifiedKeepsLabelProportions) {
  const auto pool = pool_of(60, 40);
  const auto buf = sample_replay(pool, 0.1, 11, 2);
  ASSERT_EQ(buf.entries.size(), 10u);
  int fakes = 0;
  for (const auto& e : buf.entries) {
    fakes += e.label == kLabelGenerated;
    EXPECT_EQ(e.origin, Origin::replay);
    EXPECT_TRUE(e.source_origin.has_value());
    EXPECT_TRUE(std::binary_search(e.provenance.begin(), e.provenance.end(), std::string("replay:round-2")));
  }
  EXPECT_EQ(fakes, 6);
  EXPECT_EQ(buf.source_pool_size, 100u);
}

TEST(Replay, RemainderGoesToLargerStratum) {
  const auto buf = sample_replay(pool_of(3, 4), 0.5, 1, 2);  // size 3: alloc 1 + 2 exact, no remainder
  EXPECT_EQ(buf.entries.size(), 3u);
  const auto buf2 = sample_replay(pool_of(5, 5), 0.3, 1, 2);  // 3: 1 + 1, remainder to generated on a tie
  int fakes = 0;
  for (const auto& e : buf2.entries) fakes += e.label == kLabelGenerated;
  EXPECT_EQ(fakes, 2);
}

TEST(Replay, SeededAndWarnsWhenEmpty) {
  const auto pool = pool_of(30, 30);
  const auto a = sample_replay(pool, 0.2, 5, 3), b = sample_replay(pool, 0.2, 5, 3), c = sample_replay(pool, 0.2, 6, 3);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_NE(a.entries, c.entries);
  const auto tiny = sample_replay(pool_of(3, 0), 0.05, 5, 2);
  EXPECT_TRUE(tiny.entries.empty());
  EXPECT_EQ(tiny.warnings.size(), 1u);
  EXPECT_EQ(sample_replay(pool, 0.2, 5, 3, ReplayStrategy::uniform).entries.size(), 12u);
}

TEST(Replay, AccumulatedPoolExcludesLaterRoundsAndReplays) {
  auto r1 = manifest_of("round-1", 1, pool_of(2, 0, 1));
  auto r2 = manifest_of("round-2", 2, {entry("x", 1, Origin::itw, Date(2025, 5, 1), 2)});
  DatasetEntry rep = r1.entries.front();
  rep.source_origin = rep.origin;
  rep.origin = Origin::replay;
  r2.entries.push_back(rep);
  auto r3 = manifest_of("round-3", 3, {entry("y", 1, Origin::itw, Date(2025, 8, 1), 3)});
  const auto pool = accumulated_pool({r1, r2, r3}, 3);
  EXPECT_EQ(pool.size(), 3u);
  for (const auto& e : pool) EXPECT_NE(e.origin, Origin::replay);
}

TEST(Merge, PrecedenceAndProvenanceUnion) {
  auto itw = entry("same", kLabelGenerated, Origin::itw, Date(2025, 2, 1));
  auto gen = entry("same", kLabelGenerated, Origin::gen, Date(2025, 1, 1));
  gen.provenance = {"generator:X"};
  const auto ab = merge_entries({{itw}, {gen}});
  const auto ba = merge_entries({{gen}, {itw}});
  ASSERT_EQ(ab.size(), 1u);
  EXPECT_EQ(ab, ba);
  EXPECT_EQ(ab[0].origin, Origin::itw);
  EXPECT_EQ(ab[0].provenance, (std::vector<std::string>{"generator:X", "test:same"}));
}

TEST(Merge, LabelConflict) {
  auto fake = entry("same", kLabelGenerated, Origin::itw, Date(2025, 2, 1));
  auto real = entry("same", kLabelReal, Origin::real_pool, Date(2025, 2, 1));
  EXPECT_THROW(merge_entries({{fake}, {real}}), LabelConflictError);
}

TEST(Assemble, StampsRoundRejectsLeakageAndFutureReplay) {
  const auto itw = manifest_of("itw", 2, pool_of(3, 2, 0));
  const auto gen = manifest_of("gen", 2, {entry("g", 1, Origin::gen, Date(2025, 4, 2))});
  const auto m = assemble_round(itw, gen, manifest_of("replay", 2, {}), 2, 9);
  EXPECT_EQ(m.manifest_id, "round-2");
  EXPECT_EQ(m.entries.size(), 6u);
  for (const auto& e : m.entries) EXPECT_EQ(e.round_introduced, 2);

  EXPECT_THROW(assemble_round(itw, gen, manifest_of("replay", 2, {}), 2, 9, {gen.entries[0].image_id}), LeakageError);

  auto future = entry("fut", 1, Origin::itw, Date(2025, 5, 1), 2);
  future.source_origin = Origin::itw;
  future.origin = Origin::replay;
  EXPECT_THROW(assemble_round(itw, gen, manifest_of("replay", 2, {future}), 2, 9), InvariantError);
}

TEST(Assemble, PortionSubsampleIsStratified) {
  auto m = manifest_of("m", 1, pool_of(50, 30));
  const auto half = subsample_portion(m, 0.5, 3);
  int fakes = 0;
  for (const auto& e : half.entries) fakes += e.label == kLabelGenerated;
  EXPECT_EQ(half.entries.size(), 40u);
  EXPECT_EQ(fakes, 25);
  EXPECT_EQ(subsample_portion(m, 0.5, 3), half);
  EXPECT_THROW(subsample_portion(m, 0.0, 3), ConfigError);
}

TEST(RoundState, RoundTrip) {
  TempDir dir;
  UpdateRound r{2, RoundWindow{2, Date(2025, 4, 1), Date(2025, 6, 30)}, "itw-round-2", "gen-round-2",
                "replay-round-2", "round-2", 77};
  write_round_state(dir / "r.json", r);
  EXPECT_EQ(read_round_state(dir / "r.json"), r);
}

TEST(Jobs, EmitRecordsAndRejects) {
  TempDir dir;
  auto assembled = manifest_of("round-1", 1, pool_of(2, 1, 1));
  UpdateRound r{1, RoundWindow{1, Date(2025, 1, 1), Date(2025, 3, 31)}, "itw-round-1", "gen-round-1",
                "replay-round-1", "round-1", 1};
  auto trainer = make_trainer_backend(trainer_descriptor("mock:"), dir / "calls.jsonl");
  std::vector<std::string> warnings;
  const auto job = emit_training_job(r, assembled, *trainer, json{{"epochs", 1}}, dir / "jobs.jsonl", &warnings);
  EXPECT_EQ(job.job_id, "round-1-job-1");
  EXPECT_EQ(job.manifest_hash, manifest_hash(assembled));
  EXPECT_TRUE(warnings.empty());
  const auto again = emit_training_job(r, assembled, *trainer, json{}, dir / "jobs.jsonl", &warnings);
  EXPECT_EQ(again.job_id, "round-1-job-2");
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(read_jsonl(dir / "jobs.jsonl").size(), 2u);
  EXPECT_EQ(training_job_from_json(to_json(job)), job);

  auto rejecting = make_trainer_backend(trainer_descriptor("mock:reject"), dir / "calls.jsonl");
  EXPECT_THROW(emit_training_job(r, assembled, *rejecting, json{}, dir / "jobs.jsonl"), JobRejected);
  EXPECT_EQ(read_jsonl(dir / "jobs.jsonl").size(), 2u);

  UpdateRound unassembled = r;
  unassembled.assembled_manifest.clear();
  EXPECT_THROW(emit_training_job(unassembled, assembled, *trainer, json{}, dir / "jobs.jsonl"), InvariantError);
}

TEST(Registry, ExplicitAndDefaultSplits) {
  const json doc = {{"format", "wildharvest.registry"},
                    {"version", 1},
                    {"rows",
                     {json{{"models", {"A", "B"}}, {"release", "2024-10"}, {"size", 305}, {"train", 274}, {"test", 31}},
                      json{{"models", "C"}, {"release", "2025-01-15"}, {"size", 150}}}}};
  const auto reg = registry_from_json(doc, 1, RegistryMode::strict);
  ASSERT_EQ(reg.rows.size(), 2u);
  EXPECT_EQ(reg.rows[0].models, "A, B");
  EXPECT_EQ(reg.rows[0].test, 31);
  EXPECT_EQ(reg.rows[1].test, 15);
  EXPECT_EQ(reg.rows[1].train, 135);
  EXPECT_FALSE(reg.rows[1].explicit_split);
  EXPECT_EQ(default_test_count(305), 31);
  EXPECT_EQ(default_test_count(5), 1);
}

TEST(Registry, InconsistentRows) {
  json doc = {{"format", "wildharvest.registry"},
              {"version", 1},
              {"rows", {json{{"models", "Bad"}, {"release", "2025-01"}, {"size", 305}, {"train", 275}, {"test", 31}},
                        json{{"models", "Good"}, {"release", "2025-01"}, {"size", 10}}}}};
  EXPECT_THROW(registry_from_json(doc, 1, RegistryMode::strict), RegistryError);
  const auto lenient = registry_from_json(doc, 1, RegistryMode::lenient);
  ASSERT_EQ(lenient.issues.size(), 1u);
  EXPECT_EQ(lenient.issues[0].row, 1u);
  EXPECT_EQ(lenient.issues[0].models, "Bad");
  EXPECT_EQ(lenient.rows.size(), 1u);
}

TEST(Registry, FixtureImagesSplitDeterministically) {
  const std::filesystem::path file = corpus_dir() / "generators" / "registry.json";
  const auto a = register_generators(file, 7), b = register_generators(file, 7), c = register_generators(file, 8);
  ASSERT_EQ(a.rows.size(), 6u);
  std::size_t test = 0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].test_ids, b.rows[i].test_ids);
    EXPECT_EQ(a.rows[i].train_ids.size() + a.rows[i].test_ids.size(), 10u);
    test += a.rows[i].test_ids.size();
  }
  EXPECT_EQ(a.find("FixtureGen Gamma")->test, 2);
  EXPECT_EQ(test, a.test_ids().size());
  EXPECT_NE(a.test_ids(), c.test_ids());
}
