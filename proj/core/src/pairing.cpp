#include "wildharvest/pairing.hpp"

#include <algorithm>

#include "wildharvest/errors.hpp"
#include "wildharvest/parallel.hpp"

namespace wildharvest {

RealPoolIndex::RealPoolIndex(const EmbeddingMap& embeddings) {
  for (const auto& [id, v] : embeddings) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim_)
      throw DimensionError("real pool embedding " + id + " has dimension " + std::to_string(v.size()));
    items_.push_back(Item{id, l2_normalize(v)});
  }
}

std::vector<Match> topk_matches(std::span<const double> fake_embedding, const RealPoolIndex& idx, std::size_t k) {
  if (idx.empty()) throw EmptyPoolError("real pool is empty");
  if (static_cast<int>(fake_embedding.size()) != idx.dim())
    throw DimensionError("fake embedding has dimension " + std::to_string(fake_embedding.size()) + ", pool has " +
                         std::to_string(idx.dim()));
  const auto unit = l2_normalize(std::vector<double>(fake_embedding.begin(), fake_embedding.end()));
  std::vector<Match> all;
  all.reserve(idx.size());
  for (const auto& item : idx.items()) {
    double dot = 0.0;
    for (std::size_t i = 0; i < unit.size(); ++i) dot += unit[i] * item.unit[i];
    all.push_back(Match{item.image_id, std::clamp(dot, -1.0, 1.0)});
  }
  const auto better = [](const Match& a, const Match& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.real_id < b.real_id;
  };
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);
  all.resize(n);
  return all;
}

std::vector<Pair> assign_from_ranked(const std::map<std::string, std::vector<Match>>& ranked, const PairingConfig& cfg) {
  if (cfg.reals_per_fake == 0) throw ConfigError("reals_per_fake must be positive");
  std::set<std::string> consumed;
  std::vector<Pair> out;
  for (const auto& [fake, matches] : ranked) {
    Pair p;
    p.fake_id = fake;
    for (const auto& m : matches) {
      if (p.real_ids.size() == cfg.reals_per_fake) break;
      if (cfg.global_without_replacement && consumed.count(m.real_id)) continue;
      if (std::find(p.real_ids.begin(), p.real_ids.end(), m.real_id) != p.real_ids.end()) continue;
      p.real_ids.push_back(m.real_id);
      p.similarities.push_back(m.similarity);
    }
    if (p.real_ids.size() < cfg.reals_per_fake)
      throw PairExhaustionError("fake " + fake + ": TopK list exhausted after " + std::to_string(p.real_ids.size()) +
                                " of " + std::to_string(cfg.reals_per_fake) + " reals; raise K");
    if (cfg.global_without_replacement) consumed.insert(p.real_ids.begin(), p.real_ids.end());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Pair> assign_pairs(const std::vector<std::string>& fakes, const EmbeddingMap& fake_embeddings,
                               const RealPoolIndex& idx, const PairingConfig& cfg) {
  std::vector<std::string> order = fakes;
  sort_unique(order);
  if (cfg.global_without_replacement && idx.size() < cfg.reals_per_fake * order.size())
    throw PairExhaustionError("real pool of " + std::to_string(idx.size()) + " cannot supply " +
                              std::to_string(cfg.reals_per_fake) + " distinct reals to each of " +
                              std::to_string(order.size()) + " fakes");
  const auto lists = parallel_map(order, 4, [&](const std::string& id) {
    auto it = fake_embeddings.find(id);
    if (it == fake_embeddings.end()) throw MissingInputError("no embedding for fake " + id);
    return topk_matches(it->second, idx, cfg.k);
  });
  std::map<std::string, std::vector<Match>> ranked;
  for (std::size_t i = 0; i < order.size(); ++i) ranked.emplace(order[i], lists[i]);
  return assign_from_ranked(ranked, cfg);
}

std::vector<json> pairs_to_rows(const std::vector<Pair>& pairs) {
  std::vector<Pair> sorted = pairs;
  std::sort(sorted.begin(), sorted.end(), [](const Pair& a, const Pair& b) { return a.fake_id < b.fake_id; });
  std::vector<json> rows;
  for (const auto& p : sorted)
    for (std::size_t i = 0; i < p.real_ids.size(); ++i)
      rows.push_back(json{{"fake_id", p.fake_id},
                          {"rank", i + 1},
                          {"real_id", p.real_ids[i]},
                          {"similarity", round6(p.similarities[i])}});
  return rows;
}

std::vector<Pair> pairs_from_rows(const std::vector<json>& rows) {
  std::vector<Pair> out;
  for (const auto& r : rows) {
    const std::string fake = require_string(r, "fake_id");
    if (out.empty() || out.back().fake_id != fake) out.push_back(Pair{fake, {}, {}});
    out.back().real_ids.push_back(require_string(r, "real_id"));
    out.back().similarities.push_back(require_number(r, "similarity"));
  }
  return out;
}

}  // namespace wildharvest
