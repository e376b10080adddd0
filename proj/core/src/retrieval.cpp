#include "wildharvest/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/image_ops.hpp"
#include "wildharvest/image_probe.hpp"
#include "wildharvest/parallel.hpp"

namespace wildharvest {

ImageLoader store_loader(const ContentStore& store) {
  return [&store](const std::string& id) { return store.get(id); };
}

std::vector<ScoredCandidate> score_candidates(const std::vector<CandidateImage>& cands, const DescriptionSet& c,
                                              const PromptTemplate& p2, ImageTextScorer& v, const ImageLoader& load) {
  if (!c.relevant || c.captions.empty())
    throw InvariantError("article " + c.article_id + " is not relevant; nothing to score");
  if (p2.template_id != "p2") throw ConfigError("scoring needs a p2 template, got " + p2.ref());
  auto scored = parallel_map(cands, v.descriptor().concurrency, [&](const CandidateImage& img) {
    ScoredCandidate s;
    s.image_id = img.image_id;
    s.article_id = img.article_id;
    try {
      const Bytes bytes = load(img.image_id);
      const ImageRef ref{img.image_id, bytes};
      for (const auto& caption : c.captions) {
        const double raw = v.score(ref, caption, p2.render({{"caption", caption}}));
        s.per_caption_scores.push_back(std::clamp(raw, 0.0, 1.0));
      }
      s.anchor_score = *std::max_element(s.per_caption_scores.begin(), s.per_caption_scores.end());
    } catch (const BackendUnavailable& e) {
      spdlog::warn("scoring failed for {}: {}", img.image_id, e.what());
      s.per_caption_scores.clear();
      s.anchor_score = 0.0;
      s.score_failed = true;
    }
    return s;
  });
  std::sort(scored.begin(), scored.end(),
            [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.image_id < b.image_id; });
  return scored;
}

std::vector<std::string> select_anchors(const std::vector<ScoredCandidate>& scored, const ThresholdConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : scored)
    if (!s.score_failed && s.anchor_score >= cfg.tau_anchor) out.push_back(s.image_id);
  sort_unique(out);
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw DimensionError("cosine of vectors with dimensions " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw ZeroVectorError("cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::vector<double> l2_normalize(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n == 0.0) throw ZeroVectorError("cannot normalize a zero vector");
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& key, std::vector<double> v) {
  std::unique_lock lock(mutex_);
  entries_.emplace(key, std::move(v));
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string EmbeddingCache::key(const BackendDescriptor& d, const std::string& image_id) {
  return d.backend_name + "\n" + d.model_version + "\n" + image_id;
}

std::vector<double> embed(const std::string& image_id, std::span<const std::uint8_t> bytes, EmbeddingBackend& f,
                          EmbeddingCache* cache) {
  const std::string key = EmbeddingCache::key(f.descriptor(), image_id);
  if (cache)
    if (auto hit = cache->get(key)) return *hit;
  if (bytes.empty() || !probe_image(bytes)) throw EmbeddingInputError("image " + image_id + " is not decodable");
  auto v = f.embed(ImageRef{image_id, bytes});
  if (static_cast<int>(v.size()) != f.dim())
    throw DimensionError("embedding of " + image_id + " has " + std::to_string(v.size()) + " dims, expected " +
                         std::to_string(f.dim()));
  for (double x : v)
    if (!std::isfinite(x)) throw EmbeddingInputError("embedding of " + image_id + " is not finite");
  if (cache) cache->put(key, v);
  return v;
}

EmbeddingMap embed_all(const std::vector<std::string>& ids, const ImageLoader& load, EmbeddingBackend& f,
                       EmbeddingCache* cache) {
  auto vectors = parallel_map(ids, f.descriptor().concurrency, [&](const std::string& id) {
    const Bytes bytes = load(id);
    return embed(id, bytes, f, cache);
  });
  EmbeddingMap out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], std::move(vectors[i]));
  return out;
}

namespace {

const std::vector<double>& lookup(const EmbeddingMap& m, const std::string& id) {
  auto it = m.find(id);
  if (it == m.end()) throw MissingInputError("no embedding for image " + id);
  return it->second;
}

}  // namespace

std::vector<std::string> expand_similar(const std::vector<std::string>& anchors, const std::vector<std::string>& cands,
                                        const EmbeddingMap& embeddings, const ThresholdConfig& cfg) {
  std::vector<std::string> out;
  if (anchors.empty()) return out;
  const std::set<std::string> anchor_set(anchors.begin(), anchors.end());
  for (const auto& c : cands) {
    if (anchor_set.count(c)) continue;
    const auto& vc = lookup(embeddings, c);
    double best = -1.0;
    for (const auto& a : anchors) best = std::max(best, cosine_similarity(lookup(embeddings, a), vc));
    if (best >= cfg.tau_sim) out.push_back(c);
  }
  sort_unique(out);
  return out;
}

std::vector<std::string> finalize_set(const std::vector<std::string>& anchors, const std::vector<std::string>& expanded,
                                      std::vector<std::string>* warnings) {
  std::vector<std::string> out = anchors;
  out.insert(out.end(), expanded.begin(), expanded.end());
  const std::size_t before = out.size();
  sort_unique(out);
  if (out.size() != before) {
    const std::string msg = std::to_string(before - out.size()) + " image(s) appear in both the anchor and expansion sets";
    spdlog::warn("{}", msg);
    if (warnings) warnings->push_back(msg);
  }
  return out;
}

void apply_selection(std::vector<ScoredCandidate>& scored, const std::vector<std::string>& anchors,
                     const std::vector<std::string>& expanded) {
  const std::set<std::string> a(anchors.begin(), anchors.end());
  const std::set<std::string> e(expanded.begin(), expanded.end());
  for (auto& s : scored) {
    if (a.count(s.image_id)) s.selection = Selection::anchor;
    else if (e.count(s.image_id)) s.selection = Selection::similarity_expanded;
    else s.selection = Selection::rejected;
  }
}

ArticleRetrieval retrieve_article(std::vector<ScoredCandidate> scored, const EmbeddingMap& embeddings,
                                  const ThresholdConfig& cfg) {
  ArticleRetrieval r;
  r.anchors = select_anchors(scored, cfg);
  std::vector<std::string> usable;
  for (const auto& s : scored)
    if (!s.score_failed) usable.push_back(s.image_id);
  r.expanded = expand_similar(r.anchors, usable, embeddings, cfg);
  r.final_set = finalize_set(r.anchors, r.expanded, &r.warnings);
  apply_selection(scored, r.anchors, r.expanded);
  r.scored = std::move(scored);
  return r;
}

SegmentationResult segment_images(const std::vector<std::string>& finals, SegmenterBackend& s,
                                  const ThresholdConfig& cfg, ContentStore& store) {
  struct PerImage {
    std::vector<Segment> segments;
    std::vector<std::string> warnings;
    bool failed = false;
  };
  auto results = parallel_map(finals, s.descriptor().concurrency, [&](const std::string& id) {
    PerImage r;
    const Bytes bytes = store.get(id);
    const auto info = probe_image(bytes);
    if (!info) {
      r.failed = true;
      r.warnings.push_back("image " + id + " is not decodable; kept without segments");
      return r;
    }
    std::vector<ScoredBox> boxes;
    try {
      boxes = s.segment(ImageRef{id, bytes}, *info, s.descriptor().query_vocabulary);
    } catch (const BackendUnavailable& e) {
      r.failed = true;
      r.warnings.push_back("segmentation failed for " + id + ": " + e.what() + "; original kept");
      return r;
    }
    for (const auto& b : boxes) {
      if (b.confidence < cfg.seg_threshold) continue;
      bool clipped = false;
      const auto box = clip_box(b.box, info->width, info->height, clipped);
      if (!box) {
        r.warnings.push_back("box outside " + id + " dropped");
        continue;
      }
      if (clipped) r.warnings.push_back("box clipped to the bounds of " + id);
      Bytes crop;
      try {
        crop = crop_to_png(bytes, *box);
      } catch (const ImageRejected& e) {
        r.failed = true;
        r.warnings.push_back("crop of " + id + " failed: " + e.what());
        r.segments.clear();
        return r;
      }
      Segment seg;
      seg.segment_id = store.put(crop, ImageMeta{ImageFormat::png, box->w, box->h, {}});
      seg.parent_image_id = id;
      seg.bounding_box = *box;
      seg.confidence = b.confidence;
      seg.clipped = clipped;
      r.segments.push_back(seg);
    }
    return r;
  });

  SegmentationResult out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < finals.size(); ++i) {
    for (auto& w : results[i].warnings) {
      spdlog::warn("{}", w);
      out.warnings.push_back(std::move(w));
    }
    if (results[i].failed) out.failed.push_back(finals[i]);
    for (auto& seg : results[i].segments) {
      // Two boxes of one image can produce identical crops; keep one.
      if (seen.insert(seg.segment_id).second) out.segments.push_back(std::move(seg));
    }
  }
  std::sort(out.segments.begin(), out.segments.end(), [](const Segment& a, const Segment& b) {
    return std::tie(a.parent_image_id, a.segment_id) < std::tie(b.parent_image_id, b.segment_id);
  });
  return out;
}

}  // namespace wildharvest
