#include <gtest/gtest.h>

#include "test_support.hpp"
#include "wildharvest/content_store.hpp"
#include "wildharvest/date.hpp"
#include "wildharvest/errors.hpp"
#include "wildharvest/hash.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/rng.hpp"

using namespace wildharvest;
using namespace wildharvest::testing;

TEST(Hash, KnownDigest) {
  EXPECT_EQ(hash_content(as_bytes("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hash, EmptyContentRejected) { EXPECT_THROW(hash_content(std::span<const std::uint8_t>{}), EmptyContent); }

TEST(Hash, ContentHashShape) {
  EXPECT_TRUE(is_content_hash(sha256_hex("x")));
  EXPECT_FALSE(is_content_hash("abc"));
  EXPECT_FALSE(is_content_hash(std::string(64, 'G')));
  EXPECT_EQ(hex_decode("00ff10"), (Bytes{0x00, 0xff, 0x10}));
  EXPECT_THROW(hex_decode("0"), InvariantError);
}

TEST(Dates, ParseAndArithmetic) {
  const Date d = Date::parse("2025-01-31");
  EXPECT_EQ(d.add_months(1), Date(2025, 2, 28));
  EXPECT_EQ(Date::parse_month("2024-10"), Date(2024, 10, 1));
  EXPECT_EQ(Date(2024, 2, 3).last_day_of_month(), Date(2024, 2, 29));
  EXPECT_EQ(d.to_string(), "2025-01-31");
  EXPECT_THROW(Date::parse("2025-02-30"), InvariantError);
  EXPECT_FALSE(Date::try_parse("yesterday").has_value());
}

TEST(Dates, TimestampRoundTrip) {
  const Timestamp t = Timestamp::parse("2025-12-31T12:00:00Z");
  EXPECT_EQ(t.to_string(), "2025-12-31T12:00:00Z");
  EXPECT_EQ(t.date(), Date(2025, 12, 31));
  EXPECT_THROW(Timestamp::parse("2025-12-31 12:00"), InvariantError);
}

TEST(Rng, DeterministicAndLabelSensitive) {
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_EQ(derive_seed(7, "pair"), derive_seed(7, "pair"));
  EXPECT_NE(derive_seed(7, "pair"), derive_seed(7, "assemble"));
  EXPECT_NE(derive_seed(7, "pair"), derive_seed(8, "pair"));
}

TEST(ContentStore, PutIsIdempotentAndMergesUrls) {
  TempDir dir;
  ContentStore store(dir.path());
  const Bytes img = png(40, 40);
  const std::string id = store.put(img, ImageMeta{ImageFormat::png, 40, 40, {"https://b.example/x"}});
  EXPECT_EQ(id, hash_content(img));
  EXPECT_EQ(store.put(img, ImageMeta{ImageFormat::png, 40, 40, {"https://a.example/x"}}), id);
  EXPECT_TRUE(store.contains(id));
  EXPECT_EQ(store.get(id), img);
  EXPECT_EQ(store.meta(id)->source_urls, (std::vector<std::string>{"https://a.example/x", "https://b.example/x"}));
  EXPECT_EQ(store.blob_path(id).parent_path().filename(), id.substr(0, 2));
}

TEST(ContentStore, DetectsCorruptionAndAbsence) {
  TempDir dir;
  ContentStore store(dir.path());
  const std::string id = store.put(png(40, 40), ImageMeta{});
  write_file_atomic(store.blob_path(id), "tampered");
  EXPECT_THROW(store.get(id), StoreError);
  EXPECT_THROW(store.get(sha256_hex("absent")), StoreError);
  EXPECT_THROW(store.blob_path("../etc"), StoreError);
}

TEST(Entries, Invariants) {
  auto gen = entry("g", kLabelGenerated, Origin::gen, Date(2025, 1, 1));
  EXPECT_NO_THROW(validate_entry(gen));
  gen.generator_name.reset();
  EXPECT_THROW(validate_entry(gen), InvariantError);

  auto real = entry("r", kLabelGenerated, Origin::real_pool, Date(2025, 1, 1));
  EXPECT_THROW(validate_entry(real), InvariantError);

  auto replay = entry("p", kLabelGenerated, Origin::replay, Date(2025, 1, 1));
  EXPECT_THROW(validate_entry(replay), InvariantError);
  replay.source_origin = Origin::itw;
  EXPECT_NO_THROW(validate_entry(replay));

  auto bad_label = entry("b", 2, Origin::itw, Date(2025, 1, 1));
  EXPECT_THROW(validate_entry(bad_label), InvariantError);
}

DatasetManifest sample_manifest() {
  DatasetManifest m;
  m.manifest_id = "sample";
  m.round = 2;
  m.seed = 99;
  m.created_at = Timestamp::parse("2025-06-01T00:00:00Z");
  m.config_hash = sha256_hex("cfg");
  m.entries.push_back(entry("one", kLabelGenerated, Origin::itw, Date(2025, 4, 3), 2));
  m.entries.push_back(entry("two", kLabelReal, Origin::real_pool, Date(2025, 4, 4), 2));
  auto g = entry("three", kLabelGenerated, Origin::gen, Date(2025, 2, 1), 2);
  g.provenance = {"z", "a", "z"};
  m.entries.push_back(g);
  return m;
}

TEST(Manifest, RoundTripIsCanonical) {
  const DatasetManifest m = sample_manifest();
  const std::string text = serialize_manifest(m);
  const DatasetManifest back = deserialize_manifest(text);
  EXPECT_EQ(serialize_manifest(back), text);
  EXPECT_EQ(back.entries.size(), 3u);
  EXPECT_TRUE(std::is_sorted(back.entries.begin(), back.entries.end(),
                             [](const auto& a, const auto& b) { return a.image_id < b.image_id; }));
  for (const auto& e : back.entries)
    if (e.origin == Origin::gen) {
      EXPECT_EQ(e.provenance, (std::vector<std::string>{"a", "z"}));
    }
}

TEST(Manifest, HashIgnoresEntryOrder) {
  DatasetManifest a = sample_manifest();
  DatasetManifest b = a;
  std::reverse(b.entries.begin(), b.entries.end());
  EXPECT_EQ(manifest_hash(a), manifest_hash(b));
  b.seed = 100;
  EXPECT_NE(manifest_hash(a), manifest_hash(b));
}

TEST(Manifest, DuplicateIdsRejected) {
  DatasetManifest m = sample_manifest();
  m.entries.push_back(m.entries.front());
  EXPECT_THROW(serialize_manifest(m), InvariantError);
}

TEST(Manifest, ParseErrorsCarryLineNumbers) {
  std::string text = serialize_manifest(sample_manifest());
  const auto second = text.find('\n') + 1;
  const auto third = text.find('\n', second) + 1;
  std::string broken = text.substr(0, third) + "{\"image_id\":\"x\"}\n" + text.substr(text.find('\n', third) + 1);
  try {
    deserialize_manifest(broken);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(deserialize_manifest(""), ParseError);
  EXPECT_THROW(deserialize_manifest("{\"format\":\"other\"}\n"), ParseError);
}

TEST(Manifest, EntryCountMustMatch) {
  std::string text = serialize_manifest(sample_manifest());
  text = text.substr(0, text.rfind('\n', text.size() - 2) + 1);  // drop the last entry
  EXPECT_THROW(deserialize_manifest(text), ParseError);
}

TEST(Manifest, UnknownEntryFieldRejected) {
  json j = entry_to_json(entry("x", kLabelGenerated, Origin::itw, Date(2025, 1, 1)));
  j["surprise"] = 1;
  EXPECT_THROW(entry_from_json(j), InvariantError);
}

TEST(Jsonl, ParseReportsLine) {
  try {
    parse_jsonl("{\"a\":1}\n{oops}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_EQ(parse_jsonl("{\"a\":1}\n\n{\"b\":2}\n").size(), 2u);
}

TEST(Errors, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorKind::validation), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::backend_unavailable), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::data_integrity), 4);
  EXPECT_EQ(StoreError("x").kind(), ErrorKind::data_integrity);
  EXPECT_EQ(SourceUnavailable("x").kind(), ErrorKind::backend_unavailable);
}
