// Regenerates the committed fixture corpora under fixtures/.
//
//   make_fixture <fixtures-dir>
//
// Output is fully determined by the seeds below; rerunning it rewrites the same bytes
// as long as the PNG encoder does not change.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "wildharvest/hash.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/rng.hpp"
#include "wildharvest/types.hpp"

namespace fs = std::filesystem;
using namespace wildharvest;

namespace {

constexpr int kDim = 16;
constexpr int kImagesPerArticle = 7;

std::set<std::string> g_seen;

double unit(Rng& rng) { return static_cast<double>(rng.below(1000000)) / 1000000.0; }

/// A small blocky PNG: flat background plus a few rectangles. Compresses to a few hundred bytes.
Bytes make_png(Rng& rng, int w, int h) {
  for (;;) {
    auto color = [&] {
      return cv::Scalar(static_cast<double>(rng.below(256)), static_cast<double>(rng.below(256)),
                        static_cast<double>(rng.below(256)));
    };
    cv::Mat img(h, w, CV_8UC3, color());
    for (int r = 0; r < 3; ++r) {
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
      const int rw = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - x)));
      const int rh = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h - y)));
      img(cv::Rect(x, y, rw, rh)).setTo(color());
    }
    std::vector<std::uint8_t> buf;
    cv::imencode(".png", img, buf, {cv::IMWRITE_PNG_COMPRESSION, 9});
    if (g_seen.insert(hash_content(buf)).second) return Bytes(buf.begin(), buf.end());
  }
}

std::string put_file(const fs::path& p, const Bytes& b) {
  fs::create_directories(p.parent_path());
  write_bytes_atomic(p, b);
  return hash_content(b);
}

std::vector<double> random_direction(Rng& rng) {
  std::vector<double> v(kDim);
  for (auto& x : v) x = unit(rng) * 2.0 - 1.0;
  return v;
}

std::vector<double> jitter(Rng& rng, const std::vector<double>& base, double amount) {
  std::vector<double> v = base;
  for (auto& x : v) x += (unit(rng) * 2.0 - 1.0) * amount;
  for (auto& x : v) x = round6(x);
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

std::string two(int i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return buf;
}

std::string three(int i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

void write_header(const fs::path& dir, const std::string& description) {
  fs::create_directories(dir);
  write_file_atomic(dir / "fixture.json", json{{"format", "wildharvest.fixture"},
                                               {"version", 1},
                                               {"records", "records.jsonl"},
                                               {"images", "images"},
                                               {"description", description}}
                                                  .dump(2) +
                                              "\n");
}

const char* kSubjects[] = {"a flooded city square", "a politician shaking hands with a celebrity",
                           "a shark swimming on a highway", "a burning landmark at night",
                           "a crowd at a stadium protest", "a giant wave hitting a harbor",
                           "a pope in a white puffer jacket", "soldiers posing with a tank",
                           "a collapsed bridge after an earthquake", "a rare animal in a backyard",
                           "an astronaut waving on a beach", "a snow-covered desert town"};

// --- the retrieval corpus ---------------------------------------------------------

struct ArticlePlan {
  std::string id;
  std::optional<std::string> date;
  bool relevant = true;
  bool malformed = false;
  bool all_missing = false;
  bool low_scores = false;
};

void make_corpus(const fs::path& root) {
  Rng rng(20250101);
  const fs::path articles_dir = root / "articles";
  const fs::path mock_dir = root / "mock";
  write_header(articles_dir, "fact-check articles with their images");

  const std::vector<std::string> dates = {"2025-01-08", "2025-01-21", "2025-02-03", "2025-02-17", "2025-03-04",
                                          "2025-03-18", "2025-03-31", "2025-04-01", "2025-04-15", "2025-05-06",
                                          "2025-05-27", "2025-06-10", "2025-06-30", "2025-07-14", "2025-08-05",
                                          "2025-08-26", "2025-09-09", "2025-09-30", "2025-10-14", "2025-11-04",
                                          "2025-11-18", "2025-12-02", "2025-12-16"};
  std::vector<ArticlePlan> plans;
  for (int i = 0; i < 24; ++i) {
    ArticlePlan p;
    p.id = "fc-" + two(i);
    if (i < static_cast<int>(dates.size())) p.date = dates[static_cast<std::size_t>(i)];
    p.relevant = !(i == 5 || i == 12 || i == 19);
    p.malformed = i == 8;
    p.all_missing = i == 9;
    p.low_scores = i == 14;
    plans.push_back(p);
  }

  std::vector<json> records, responses, score_rows, embed_rows, segment_rows, annotation_rows;
  std::map<int, std::vector<std::string>> ids_of;
  std::set<std::string> annotated;

  for (int i = 0; i < 24; ++i) {
    const ArticlePlan& p = plans[static_cast<std::size_t>(i)];
    const std::string subject = kSubjects[i % 12];
    std::vector<std::string> captions;
    if (p.relevant && !p.malformed) {
      captions.push_back("Photo-realistic image of " + subject);
      if (i % 3 == 0) captions.push_back("Close-up showing " + subject + " with visible distortions");
    }
    std::vector<std::string> urls;
    std::vector<std::string> ids;
    const std::vector<double> dir = random_direction(rng);
    for (int j = 0; j < kImagesPerArticle; ++j) {
      const std::string name = "fc" + two(i) + "-" + std::to_string(j) + ".png";
      const std::string url = "https://factcheck.example/media/" + name;
      if (!(i == 7 && j == 6)) urls.push_back(url);
      if (p.all_missing || (i == 2 && j == 6)) {
        ids.emplace_back();
        continue;
      }
      Bytes bytes;
      if (i == 3 && j == 6) bytes = make_png(rng, 16, 16);
      else if (i == 4 && j == 6) bytes = read_bytes(articles_dir / "images" / ("fc04-5.png"));
      else if (i == 6 && j == 0) bytes = read_bytes(articles_dir / "images" / ("fc01-0.png"));
      else bytes = make_png(rng, 64, 64);
      const std::string id = put_file(articles_dir / "images" / name, bytes);
      ids.push_back(id);
      if ((i == 4 && j == 6) || (i == 6 && j == 0) || (i == 3 && j == 6)) continue;

      // Embedding: images 0-3 cluster around the article direction, 4-6 are unrelated.
      std::vector<double> v;
      if (j <= 1) v = jitter(rng, dir, 0.05);
      else if (j <= 3) v = jitter(rng, dir, 0.3);
      else
        do v = jitter(rng, random_direction(rng), 0.0);
        while (cosine(v, dir) > 0.4);
      embed_rows.push_back(json{{"image_id", id}, {"vector", v}});
    }
    ids_of[i] = ids;

    json rec{{"article_id", p.id},
             {"source_url", "https://factcheck.example/articles/" + p.id},
             {"source_name", "factcheck.example"},
             {"body_text", p.relevant ? "Viral posts this week shared an image of " + subject +
                                            ". Our analysis shows the picture was generated by an AI image model: "
                                            "hands, text and shadows are inconsistent and no original source exists."
                                      : "A viral claim about " + subject +
                                            " misattributes a genuine photograph taken years ago in another country."},
             {"image_urls", urls}};
    if (p.date) rec["published_at"] = *p.date;
    records.push_back(rec);

    json response{{"relevant", p.relevant}, {"captions", captions}, {"image_urls", json::array()}};
    if (p.malformed) response = json{{"relevant", true}, {"captions", json::array()}, {"image_urls", json::array()}};
    if (i == 7) response["image_urls"] = {"https://factcheck.example/media/fc07-6.png"};
    responses.push_back(json{{"article_id", p.id}, {"response", response}});

    if (!p.relevant || p.malformed) continue;
    const int designed[kImagesPerArticle] = {92, 80, 79, 35, 20, 45, 15};
    for (int j = 0; j < kImagesPerArticle; ++j) {
      const std::string& id = ids[static_cast<std::size_t>(j)];
      if (id.empty()) continue;
      if (i == 11 && j == 4) {
        score_rows.push_back(json{{"image_id", id}, {"fail", true}});
        continue;
      }
      const int base = p.low_scores ? std::min(designed[j], 70) : designed[j];
      for (std::size_t c = 0; c < captions.size(); ++c)
        score_rows.push_back(
            json{{"image_id", id}, {"caption", captions[c]}, {"score", std::max(0, base - 10 * static_cast<int>(c))}});
      if (!annotated.insert(id).second) continue;
      const auto digest = sha256_raw(as_bytes(id));
      annotation_rows.push_back(json{{"image_id", id}, {"verdict", digest[0] % 12 == 0 ? "incorrect" : "correct"}});
    }
  }
  // A record with the same URL as fc-00 (dropped) and one without a body (payload error).
  records.push_back(json{{"article_id", "fc-00-repost"},
                         {"source_url", "https://factcheck.example/articles/fc-00"},
                         {"published_at", "2025-01-09"},
                         {"body_text", "Repost of an earlier fact-check."},
                         {"image_urls", json::array()}});
  records.push_back(json{{"article_id", "fc-broken"}, {"source_url", "https://factcheck.example/articles/broken"}});

  // Segmenter table: several boxes, a box overhanging the border, a low-confidence box, a failure.
  segment_rows.push_back(json{{"image_id", ids_of[1][0]},
                              {"boxes", {{{"x", 4}, {"y", 4}, {"w", 36}, {"h", 36}, {"confidence", 0.9}},
                                         {{"x", 24}, {"y", 24}, {"w", 36}, {"h", 36}, {"confidence", 0.7}}}}});
  segment_rows.push_back(json{{"image_id", ids_of[2][0]},
                              {"boxes", {{{"x", 20}, {"y", 20}, {"w", 60}, {"h", 60}, {"confidence", 0.8}}}}});
  segment_rows.push_back(json{{"image_id", ids_of[3][0]},
                              {"boxes", {{{"x", 0}, {"y", 0}, {"w", 40}, {"h", 40}, {"confidence", 0.2}}}}});
  segment_rows.push_back(json{{"image_id", ids_of[4][1]}, {"fail", true}});

  write_jsonl(articles_dir / "records.jsonl", records);
  fs::create_directories(mock_dir);
  write_jsonl(mock_dir / "extraction.jsonl", responses);
  write_jsonl(mock_dir / "scores.jsonl", score_rows);
  write_jsonl(mock_dir / "embeddings.jsonl", embed_rows);
  write_jsonl(mock_dir / "segments.jsonl", segment_rows);
  fs::create_directories(root / "eval");
  write_jsonl(root / "eval" / "annotations.jsonl", annotation_rows);

  // Real pool: two outlets' worth of news photos and a social feed.
  const char* outlets[] = {"daily-courier", "metro-times", "the-ledger", "coastal-news"};
  auto real_date = [&] {
    const Date d = Date{2025, 1, 1}.add_days(static_cast<int>(rng.below(365)));
    return d.to_string();
  };
  write_header(root / "news", "news photographs");
  std::vector<json> news;
  for (int k = 0; k < 120; ++k) {
    const std::string name = "n" + three(k) + ".png";
    put_file(root / "news" / "images" / name, make_png(rng, 64, 64));
    news.push_back(json{{"url", "https://news.example/photos/" + name},
                        {"outlet", outlets[k % 4]},
                        {"published_at", real_date()},
                        {"caption", "Staff photo " + std::to_string(k)}});
  }
  for (int k = 0; k < 3; ++k)
    news.push_back(json{{"url", "https://news.example/mirror/n" + three(k) + ".png"},
                        {"outlet", "syndicated"},
                        {"published_at", real_date()},
                        {"caption", "Syndicated copy"}});
  put_file(root / "news" / "images" / "n123.png", make_png(rng, 64, 64));
  news.push_back(json{{"url", "https://news.example/photos/n123.png"},
                      {"outlet", "daily-courier"},
                      {"published_at", "2024-06-01"},
                      {"caption", "Archive photo"}});
  put_file(root / "news" / "images" / "n124.png", make_png(rng, 64, 64));
  news.push_back(json{{"url", "https://news.example/photos/n124.png"},
                      {"outlet", "metro-times"},
                      {"published_at", "2025-05-05"},
                      {"caption", "An AI-generated illustration of the budget debate"}});
  write_jsonl(root / "news" / "records.jsonl", news);

  write_header(root / "social", "social media posts");
  std::vector<json> social;
  for (int k = 0; k < 120; ++k) {
    const std::string name = "s" + three(k) + ".png";
    if (k == 118) put_file(root / "social" / "images" / name, make_png(rng, 16, 16));
    else if (k != 119) put_file(root / "social" / "images" / name, make_png(rng, 64, 64));
    social.push_back(json{{"url", "https://social.example/media/" + name},
                          {"outlet", "user-" + three(k % 40)},
                          {"published_at", real_date()},
                          {"caption", "Posted from my phone"}});
  }
  write_jsonl(root / "social" / "records.jsonl", social);

  // Generator-driven images: six models, ten images each.
  const std::vector<std::pair<std::string, std::string>> gens = {
      {"FixtureGen Alpha", "2024-10"}, {"FixtureGen Beta", "2025-02"},  {"FixtureGen Gamma", "2025-05"},
      {"FixtureGen Delta", "2025-07"}, {"FixtureGen Epsilon", "2025-09"}, {"FixtureGen Zeta", "2025-11"}};
  json rows = json::array();
  for (std::size_t g = 0; g < gens.size(); ++g) {
    json files = json::array();
    for (int k = 0; k < 10; ++k) {
      const std::string rel = "images/g" + std::to_string(g) + "-" + std::to_string(k) + ".png";
      put_file(root / "generators" / rel, make_png(rng, 64, 64));
      files.push_back(rel);
    }
    json row{{"models", gens[g].first}, {"release", gens[g].second}, {"size", 10}, {"images", files}};
    if (g == 2) {
      row["train"] = 8;
      row["test"] = 2;
    }
    rows.push_back(row);
  }
  write_file_atomic(root / "generators" / "registry.json",
                    json{{"format", "wildharvest.registry"}, {"version", 1}, {"rows", rows}}.dump(2) + "\n");

  // Detector scores for four chronological tasks over three test sets.
  std::vector<json> scores;
  const char* datasets[] = {"itw", "generator", "legacy"};
  for (int task = 1; task <= 4; ++task) {
    for (int d = 0; d < 3; ++d) {
      const double pos_mu = d == 2 ? 0.72 - 0.03 * task : 0.5 + 0.07 * task;
      for (int k = 0; k < 50; ++k) {
        const int label = k < 25 ? 1 : 0;
        const double mu = label ? pos_mu : 0.35;
        double s = mu + (unit(rng) - 0.5) * 0.6;
        s = std::round(std::clamp(s, 0.0, 1.0) * 100.0) / 100.0;
        json r{{"image_id", "t" + std::to_string(task) + "-" + datasets[d] + "-" + three(k)},
               {"score", s},
               {"label", label},
               {"dataset", datasets[d]},
               {"task", task}};
        if (d == 1 && label) r["generator"] = gens[static_cast<std::size_t>(k % 6)].first;
        scores.push_back(r);
      }
    }
  }
  write_jsonl(root / "eval" / "detector_scores.jsonl", scores);
}

// --- Table 1 transcription ----------------------------------------------------------

void make_table1(const fs::path& file) {
  struct Row {
    std::vector<std::string> models;
    const char* release;
    int size, train, test;
  };
  const std::vector<Row> table = {
      {{"SDXL"}, "2023-11", 305, 274, 31},
      {{"FLUX.1 [pro] v1.1", "SD 3.5 Med"}, "2024-10", 305, 274, 31},
      {{"Reve Img 1.0", "HiDream I1 Dev"}, "2025-03", 305, 274, 31},
      {{"GPT-Img 1", "Ideogram 3"}, "2025-04", 305, 274, 31},
      {{"Midjourney v7"}, "2025-04", 301, 270, 31},
      {{"Imagen 4"}, "2025-05", 305, 274, 31},
      {{"Gemini 2.5 Flash Img"}, "2025-10", 305, 274, 31},
      {{"Firefly Img 5"}, "2025-10", 150, 133, 17},
      {{"FLUX.2", "Z Img Turbo"}, "2025-11", 305, 275, 31},
      {{"FLUX.2 [pro]"}, "2025-11", 305, 274, 31},
      {{"FLUX.2 [dev]"}, "2025-11", 205, 182, 23},
      {{"Gemini 3 Pro Img"}, "2025-11", 305, 276, 31},
      {{"FLUX.2 [max]"}, "2025-12", 205, 182, 23},
      {{"GPT-Img 1.5", "Seedream 4.5"}, "2025-12", 305, 274, 31},
  };
  json rows = json::array();
  for (const auto& r : table)
    rows.push_back(json{{"models", r.models}, {"release", r.release}, {"size", r.size}, {"train", r.train}, {"test", r.test}});
  write_file_atomic(file, json{{"format", "wildharvest.registry"},
                               {"version", 1},
                               {"note", "published generator table transcribed as printed; two rows do not sum"},
                               {"rows", rows}}
                                  .dump(2) +
                              "\n");
}

// --- validation-precision fixture ---------------------------------------------------

void make_validation(const fs::path& dir) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.manifest_id = "validation-2884";
  m.seed = 7;
  m.created_at = Timestamp::parse("2025-12-31T00:00:00Z");
  std::vector<json> annotations;
  for (int i = 0; i < 2884; ++i) {
    DatasetEntry e;
    e.image_id = sha256_hex("validation-" + std::to_string(i));
    e.label = kLabelGenerated;
    e.origin = Origin::itw;
    e.event_date = Date{2025, 1, 1}.add_days(i % 365);
    e.round_introduced = 1 + (i % 365) / 92;
    e.provenance = {"article:val-" + std::to_string(i / 8)};
    m.entries.push_back(e);
    annotations.push_back(json{{"image_id", e.image_id}, {"verdict", i % 13 == 5 ? "incorrect" : "correct"}});
  }
  canonicalize(m);
  write_manifest(dir / "entries.manifest.jsonl", m);
  write_jsonl(dir / "annotations.jsonl", annotations);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixture <fixtures-dir>\n");
    return 2;
  }
  const fs::path out = argv[1];
  make_corpus(out / "corpus_v1");
  make_table1(out / "table1_registry.json");
  make_validation(out / "validation_2884");
  std::printf("fixtures written to %s\n", out.c_str());
  return 0;
}
