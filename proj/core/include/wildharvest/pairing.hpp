#pragma once

#include <set>
#include <string>
#include <vector>

#include "wildharvest/jsonl.hpp"
#include "wildharvest/retrieval.hpp"

namespace wildharvest {

/// Real-image pool with L2-normalized embeddings, sorted by image_id.
class RealPoolIndex {
 public:
  struct Item {
    std::string image_id;
    std::vector<double> unit;
  };

  RealPoolIndex() = default;
  /// Throws DimensionError on mixed dimensions and ZeroVectorError on zero vectors.
  explicit RealPoolIndex(const EmbeddingMap& embeddings);

  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  int dim() const { return dim_; }

 private:
  std::vector<Item> items_;
  int dim_ = 0;
};

struct Match {
  std::string real_id;
  double similarity = 0.0;
  bool operator==(const Match&) const = default;
};

/// The K most similar reals to `fake_embedding`, ties broken by ascending image_id.
/// Throws EmptyPoolError for an empty pool.
std::vector<Match> topk_matches(std::span<const double> fake_embedding, const RealPoolIndex& idx, std::size_t k);

struct Pair {
  std::string fake_id;
  std::vector<std::string> real_ids;
  std::vector<double> similarities;
  bool operator==(const Pair&) const = default;
};

struct PairingConfig {
  std::size_t k = 500;
  std::size_t reals_per_fake = 1;
  bool global_without_replacement = true;
};

/// Processes fakes in ascending id order; each takes its best `reals_per_fake`
/// unconsumed reals from its TopK list. Throws PairExhaustionError naming the
/// fake when its list runs out.
std::vector<Pair> assign_pairs(const std::vector<std::string>& fakes, const EmbeddingMap& fake_embeddings,
                               const RealPoolIndex& idx, const PairingConfig& cfg);

/// The same greedy rule over precomputed TopK lists (fake id -> ranked matches).
std::vector<Pair> assign_from_ranked(const std::map<std::string, std::vector<Match>>& ranked, const PairingConfig& cfg);

/// One line per (fake_id, real_id, similarity), sorted by fake_id then rank.
std::vector<json> pairs_to_rows(const std::vector<Pair>& pairs);
std::vector<Pair> pairs_from_rows(const std::vector<json>& rows);

}  // namespace wildharvest
