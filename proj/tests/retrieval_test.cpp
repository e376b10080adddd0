#include <gtest/gtest.h>

#include <atomic>

#include "test_support.hpp"
#include "wildharvest/errors.hpp"
#include "wildharvest/image_ops.hpp"
#include "wildharvest/image_probe.hpp"
#include "wildharvest/retrieval.hpp"

using namespace wildharvest;
using namespace wildharvest::testing;

namespace {

class TableScorer final : public ImageTextScorer {
 public:
  std::map<std::pair<std::string, std::string>, double> scores;
  std::set<std::string> failing;
  const BackendDescriptor& descriptor() const override { return d_; }
  double score(const ImageRef& image, const std::string& caption, const std::string& prompt) override {
    EXPECT_NE(prompt.find(caption), std::string::npos);
    if (failing.count(image.image_id)) throw BackendUnavailable("scripted failure");
    return scores.at({image.image_id, caption});
  }

 private:
  BackendDescriptor d_;
};

class CountingEmbedder final : public EmbeddingBackend {
 public:
  CountingEmbedder() { d_.backend_name = "count"; d_.dim = 4; }
  const BackendDescriptor& descriptor() const override { return d_; }
  std::vector<double> embed(const ImageRef& image) override {
    ++calls;
    return mock_embedding(image.image_id, 4);
  }
  std::atomic<int> calls{0};
  BackendDescriptor d_;
};

class BoxSegmenter final : public SegmenterBackend {
 public:
  std::map<std::string, std::vector<ScoredBox>> boxes;
  std::set<std::string> failing;
  const BackendDescriptor& descriptor() const override { return d_; }
  std::vector<ScoredBox> segment(const ImageRef& image, const ImageInfo&, const std::vector<std::string>&) override {
    if (failing.count(image.image_id)) throw BackendUnavailable("scripted failure");
    auto it = boxes.find(image.image_id);
    return it == boxes.end() ? std::vector<ScoredBox>{} : it->second;
  }

 private:
  BackendDescriptor d_;
};

ScoredCandidate scored(const std::string& id, double s, bool failed = false) {
  ScoredCandidate c;
  c.image_id = id;
  c.article_id = "a";
  c.anchor_score = s;
  c.score_failed = failed;
  return c;
}

const PromptTemplate kP2 = make_template("p2", "v1", "Does the image show {caption}? 0-100.");

}  // namespace

TEST(Scoring, AnchorScoreIsMaxOverCaptions) {
  TempDir dir;
  ContentStore store(dir.path());
  const std::string a = store.put(png(40, 40, 0, 0), {}), b = store.put(png(40, 40, 1, 0), {});
  std::vector<CandidateImage> cands(2);
  cands[0].image_id = b;
  cands[1].image_id = a;
  DescriptionSet d;
  d.article_id = "art";
  d.relevant = true;
  d.captions = {"c1", "c2"};
  TableScorer v;
  v.scores = {{{a, "c1"}, 0.3}, {{a, "c2"}, 0.85}};
  v.failing = {b};
  const auto out = score_candidates(cands, d, kP2, v, store_loader(store));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[0].image_id < out[1].image_id);
  for (const auto& s : out) {
    if (s.image_id == a) {
      EXPECT_EQ(s.anchor_score, 0.85);
      EXPECT_EQ(s.per_caption_scores, (std::vector<double>{0.3, 0.85}));
      EXPECT_FALSE(s.score_failed);
    } else {
      EXPECT_TRUE(s.score_failed);
    }
  }
  d.relevant = false;
  EXPECT_THROW(score_candidates(cands, d, kP2, v, store_loader(store)), InvariantError);
}

TEST(Anchors, ThresholdInclusiveAndFailuresExcluded) {
  ThresholdConfig cfg;
  const auto got = select_anchors({scored("c", 0.8), scored("a", 0.79999), scored("b", 0.95), scored("d", 0.99, true)}, cfg);
  EXPECT_EQ(got, (std::vector<std::string>{"b", "c"}));
}

TEST(Cosine, ErrorsAndValues) {
  const std::vector<double> u{1, 0}, v{0, 2}, w{1, 0, 0}, z{0, 0};
  EXPECT_EQ(cosine_similarity(u, v), 0.0);
  EXPECT_EQ(cosine_similarity(u, u), 1.0);
  EXPECT_THROW(cosine_similarity(u, w), DimensionError);
  EXPECT_THROW(cosine_similarity(u, z), ZeroVectorError);
  EXPECT_THROW(l2_normalize({0, 0}), ZeroVectorError);
  const auto n = l2_normalize({3, 4});
  EXPECT_DOUBLE_EQ(n[0], 0.6);
}

TEST(Expansion, AnyAnchorSuffices) {
  ThresholdConfig cfg;
  EmbeddingMap e{{"a1", {1, 0}}, {"a2", {0, 1}}, {"x", {0.1, 1}}, {"y", {1, 1}}, {"z", {-1, 0}}};
  EXPECT_EQ(expand_similar({"a1", "a2"}, {"a1", "x", "y", "z"}, e, cfg), (std::vector<std::string>{"x"}));
  EXPECT_TRUE(expand_similar({}, {"x"}, e, cfg).empty());
  EXPECT_THROW(expand_similar({"a1"}, {"missing"}, e, cfg), MissingInputError);
}

TEST(Finalize, UnionWarnsOnOverlap) {
  std::vector<std::string> warnings;
  EXPECT_EQ(finalize_set({"b", "a"}, {"c"}, &warnings), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(warnings.empty());
  EXPECT_EQ(finalize_set({"a"}, {"a", "c"}, &warnings), (std::vector<std::string>{"a", "c"}));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Retrieval, ArticleSelectionLabels) {
  ThresholdConfig cfg;
  EmbeddingMap e{{"a", {1, 0}}, {"near", {1, 0.2}}, {"far", {0, 1}}, {"broken", {1, 0}}};
  const auto r = retrieve_article({scored("a", 0.9), scored("near", 0.1), scored("far", 0.5), scored("broken", 0, true)}, e, cfg);
  EXPECT_EQ(r.final_set, (std::vector<std::string>{"a", "near"}));
  std::map<std::string, Selection> sel;
  for (const auto& s : r.scored) sel[s.image_id] = s.selection;
  EXPECT_EQ(sel["a"], Selection::anchor);
  EXPECT_EQ(sel["near"], Selection::similarity_expanded);
  EXPECT_EQ(sel["far"], Selection::rejected);
  EXPECT_EQ(sel["broken"], Selection::rejected);
}

TEST(Embedding, CacheAvoidsRecomputation) {
  TempDir dir;
  ContentStore store(dir.path());
  const std::string a = store.put(png(40, 40), {});
  CountingEmbedder f;
  EmbeddingCache cache;
  const auto m1 = embed_all({a}, store_loader(store), f, &cache);
  const auto m2 = embed_all({a}, store_loader(store), f, &cache);
  EXPECT_EQ(f.calls.load(), 1);
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_THROW(embed("x", as_bytes("garbage"), f), EmbeddingInputError);
}

TEST(Embedding, MockVectorsAreStable) {
  EXPECT_EQ(mock_embedding("abc", 16), mock_embedding("abc", 16));
  EXPECT_NE(mock_embedding("abc", 16), mock_embedding("abd", 16));
  EXPECT_EQ(mock_embedding("abc", 700).size(), 700u);
  EXPECT_THROW(mock_embedding("abc", 0), ConfigError);
}

TEST(Segmentation, ThresholdClipAndFailure) {
  TempDir dir;
  ContentStore store(dir.path());
  const std::string a = store.put(png(64, 64, 0, 0), {}), b = store.put(png(60, 60, 2, 2), {});
  BoxSegmenter s;
  s.boxes[a] = {ScoredBox{BoundingBox{4, 4, 20, 20}, 0.9}, ScoredBox{BoundingBox{50, 50, 30, 30}, 0.8},
                ScoredBox{BoundingBox{0, 0, 10, 10}, 0.1}, ScoredBox{BoundingBox{100, 100, 5, 5}, 0.9}};
  s.failing = {b};
  ThresholdConfig cfg;
  const auto r = segment_images({a, b}, s, cfg, store);
  ASSERT_EQ(r.segments.size(), 2u);
  EXPECT_EQ(r.failed, (std::vector<std::string>{b}));
  int clipped = 0;
  for (const auto& seg : r.segments) {
    EXPECT_EQ(seg.parent_image_id, a);
    EXPECT_TRUE(store.contains(seg.segment_id));
    const auto info = probe_image(store.get(seg.segment_id));
    ASSERT_TRUE(info);
    EXPECT_EQ(info->width, seg.bounding_box.w);
    if (seg.clipped) {
      ++clipped;
      EXPECT_EQ(seg.bounding_box, (BoundingBox{50, 50, 14, 14}));
    }
  }
  EXPECT_EQ(clipped, 1);
}

TEST(Segmentation, ClipBox) {
  bool clipped = false;
  EXPECT_EQ(clip_box(BoundingBox{-5, 0, 10, 10}, 64, 64, clipped), (BoundingBox{0, 0, 5, 10}));
  EXPECT_TRUE(clipped);
  EXPECT_FALSE(clip_box(BoundingBox{70, 0, 10, 10}, 64, 64, clipped).has_value());
  clip_box(BoundingBox{0, 0, 64, 64}, 64, 64, clipped);
  EXPECT_FALSE(clipped);
}
