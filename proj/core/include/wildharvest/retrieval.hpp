#pragma once

#include <functional>
#include <map>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "wildharvest/backends.hpp"
#include "wildharvest/content_store.hpp"
#include "wildharvest/extraction.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

/// Returns the stored bytes of an image id.
using ImageLoader = std::function<Bytes(const std::string& image_id)>;

ImageLoader store_loader(const ContentStore& store);

/// Scores every candidate against every caption; anchor_score is the max over
/// captions. A backend failure marks that candidate score_failed. Sorted by image_id.
std::vector<ScoredCandidate> score_candidates(const std::vector<CandidateImage>& cands, const DescriptionSet& c,
                                              const PromptTemplate& p2, ImageTextScorer& v, const ImageLoader& load);

/// Ids with anchor_score >= tau_anchor (failed candidates never qualify), sorted.
std::vector<std::string> select_anchors(const std::vector<ScoredCandidate>& scored, const ThresholdConfig& cfg);

/// dot(u,v) / (|u| |v|). Throws DimensionError and ZeroVectorError.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Throws ZeroVectorError for a zero vector.
std::vector<double> l2_normalize(std::vector<double> v);

/// Concurrent reads, serialized writes. Keyed by (backend, model version, image id).
class EmbeddingCache {
 public:
  std::optional<std::vector<double>> get(const std::string& key) const;
  void put(const std::string& key, std::vector<double> v);
  std::size_t size() const;
  static std::string key(const BackendDescriptor& d, const std::string& image_id);

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<double>> entries_;
};

/// Embeds one image. Undecodable bytes throw EmbeddingInputError; a wrong
/// dimension from the backend throws DimensionError.
std::vector<double> embed(const std::string& image_id, std::span<const std::uint8_t> bytes, EmbeddingBackend& f,
                          EmbeddingCache* cache = nullptr);

using EmbeddingMap = std::map<std::string, std::vector<double>>;

/// Embeds many images with bounded backend concurrency.
EmbeddingMap embed_all(const std::vector<std::string>& ids, const ImageLoader& load, EmbeddingBackend& f,
                       EmbeddingCache* cache = nullptr);

/// Candidates (anchors excluded) whose best similarity to any anchor reaches tau_sim. Sorted.
std::vector<std::string> expand_similar(const std::vector<std::string>& anchors, const std::vector<std::string>& cands,
                                        const EmbeddingMap& embeddings, const ThresholdConfig& cfg);

/// Sorted duplicate-free union. An overlap is tolerated and reported in `warnings`.
std::vector<std::string> finalize_set(const std::vector<std::string>& anchors, const std::vector<std::string>& expanded,
                                      std::vector<std::string>* warnings = nullptr);

/// Writes the selection field from the anchor and expansion sets.
void apply_selection(std::vector<ScoredCandidate>& scored, const std::vector<std::string>& anchors,
                     const std::vector<std::string>& expanded);

struct ArticleRetrieval {
  std::vector<ScoredCandidate> scored;
  std::vector<std::string> anchors;
  std::vector<std::string> expanded;
  std::vector<std::string> final_set;
  std::vector<std::string> warnings;
};

/// Anchors, expansion and final set for one article from its scored candidates.
ArticleRetrieval retrieve_article(std::vector<ScoredCandidate> scored, const EmbeddingMap& embeddings,
                                  const ThresholdConfig& cfg);

struct SegmentationResult {
  /// Sorted by (parent_image_id, segment_id).
  std::vector<Segment> segments;
  /// Images whose segmentation failed; their originals are kept without segments.
  std::vector<std::string> failed;
  std::vector<std::string> warnings;
};

/// Keeps boxes with confidence >= seg_threshold, clips them to the image, stores
/// PNG crops content-addressed and returns them. Originals stay in the store.
SegmentationResult segment_images(const std::vector<std::string>& finals, SegmenterBackend& s,
                                  const ThresholdConfig& cfg, ContentStore& store);

}  // namespace wildharvest
