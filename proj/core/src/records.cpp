#include "wildharvest/records.hpp"

#include "wildharvest/errors.hpp"

namespace wildharvest {

json to_json(const Article& a) {
  json j{{"article_id", a.article_id},       {"source_url", a.source_url},
         {"source_name", a.source_name},     {"published_at", a.published_at.to_string()},
         {"body_text", a.body_text},         {"raw_image_urls", a.raw_image_urls}};
  if (a.date_inferred) j["date_inferred"] = true;
  return j;
}

Article article_from_json(const json& j) {
  Article a;
  a.article_id = require_string(j, "article_id");
  a.source_url = require_string(j, "source_url");
  a.source_name = require_string(j, "source_name");
  a.published_at = Date::parse(require_string(j, "published_at"));
  a.date_inferred = j.value("date_inferred", false);
  a.body_text = require_string(j, "body_text");
  a.raw_image_urls = string_array(j, "raw_image_urls");
  return a;
}

json to_json(const DescriptionSet& d) {
  return json{{"article_id", d.article_id},
              {"captions", d.captions},
              {"relevant", d.relevant},
              {"image_urls", d.image_urls}};
}

DescriptionSet description_set_from_json(const json& j) {
  DescriptionSet d;
  d.article_id = require_string(j, "article_id");
  d.captions = string_array(j, "captions");
  d.relevant = require_bool(j, "relevant");
  d.image_urls = string_array(j, "image_urls", false);
  if (d.relevant == d.captions.empty())
    throw InvariantError("description set " + d.article_id + ": relevant must equal nonempty captions");
  return d;
}

json to_json(const CandidateImage& c) {
  return json{{"image_id", c.image_id},
              {"article_id", c.article_id},
              {"source_url", c.source_url},
              {"source_urls", c.source_urls},
              {"format", to_string(c.format)},
              {"width_px", c.width_px},
              {"height_px", c.height_px},
              {"fetched_at", c.fetched_at.to_string()}};
}

CandidateImage candidate_from_json(const json& j) {
  CandidateImage c;
  c.image_id = require_string(j, "image_id");
  c.article_id = require_string(j, "article_id");
  c.source_url = require_string(j, "source_url");
  c.source_urls = string_array(j, "source_urls");
  c.format = parse_image_format(require_string(j, "format"));
  c.width_px = static_cast<int>(require_int(j, "width_px"));
  c.height_px = static_cast<int>(require_int(j, "height_px"));
  c.fetched_at = Timestamp::parse(require_string(j, "fetched_at"));
  if (c.width_px <= 0 || c.height_px <= 0) throw InvariantError("candidate " + c.image_id + ": empty dimensions");
  return c;
}

json to_json(const ScoredCandidate& s) {
  json scores = json::array();
  for (double v : s.per_caption_scores) scores.push_back(round6(v));
  json j{{"image_id", s.image_id},
         {"article_id", s.article_id},
         {"anchor_score", round6(s.anchor_score)},
         {"per_caption_scores", scores},
         {"selection", to_string(s.selection)}};
  if (s.score_failed) j["score_failed"] = true;
  return j;
}

ScoredCandidate scored_from_json(const json& j) {
  ScoredCandidate s;
  s.image_id = require_string(j, "image_id");
  s.article_id = require_string(j, "article_id");
  s.anchor_score = require_number(j, "anchor_score");
  const json& arr = require(j, "per_caption_scores");
  if (!arr.is_array()) throw InvariantError("per_caption_scores must be an array");
  for (const auto& v : arr) {
    if (!v.is_number()) throw InvariantError("per_caption_scores must hold numbers");
    s.per_caption_scores.push_back(v.get<double>());
  }
  s.selection = parse_selection(require_string(j, "selection"));
  s.score_failed = j.value("score_failed", false);
  return s;
}

json to_json(const Segment& s) {
  json j{{"segment_id", s.segment_id},
         {"parent_image_id", s.parent_image_id},
         {"bounding_box",
          json{{"x", s.bounding_box.x}, {"y", s.bounding_box.y}, {"w", s.bounding_box.w}, {"h", s.bounding_box.h}}},
         {"confidence", round6(s.confidence)}};
  if (s.clipped) j["clipped"] = true;
  return j;
}

Segment segment_from_json(const json& j) {
  Segment s;
  s.segment_id = require_string(j, "segment_id");
  s.parent_image_id = require_string(j, "parent_image_id");
  const json& b = require(j, "bounding_box");
  s.bounding_box = BoundingBox{static_cast<int>(require_int(b, "x")), static_cast<int>(require_int(b, "y")),
                               static_cast<int>(require_int(b, "w")), static_cast<int>(require_int(b, "h"))};
  s.confidence = require_number(j, "confidence");
  s.clipped = j.value("clipped", false);
  return s;
}

json to_json(const RealImage& r) {
  return json{{"image_id", r.image_id},
              {"source", to_string(r.source)},
              {"outlet", r.outlet},
              {"published_at", r.published_at.to_string()},
              {"source_url", r.source_url}};
}

RealImage real_image_from_json(const json& j) {
  RealImage r;
  r.image_id = require_string(j, "image_id");
  r.source = parse_real_source(require_string(j, "source"));
  r.outlet = require_string(j, "outlet");
  r.published_at = Date::parse(require_string(j, "published_at"));
  r.source_url = j.value("source_url", std::string{});
  return r;
}

json to_json(const ThresholdConfig& t) {
  return json{{"tau_anchor", t.tau_anchor},       {"tau_sim", t.tau_sim},
              {"top_k", t.top_k},                 {"seg_threshold", t.seg_threshold},
              {"acc_threshold", t.acc_threshold}, {"replay_rho", t.replay_rho}};
}

ThresholdConfig thresholds_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("thresholds must be an object");
  static const char* known[] = {"tau_anchor", "tau_sim", "top_k", "seg_threshold", "acc_threshold", "replay_rho"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown threshold key '" + it.key() + "'");
  }
  ThresholdConfig t;
  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string(key) + " must be a number");
    out = j[key].get<double>();
  };
  num("tau_anchor", t.tau_anchor);
  num("tau_sim", t.tau_sim);
  num("seg_threshold", t.seg_threshold);
  num("acc_threshold", t.acc_threshold);
  num("replay_rho", t.replay_rho);
  if (j.contains("top_k")) {
    if (!j["top_k"].is_number_integer()) throw ConfigError("top_k must be an integer");
    t.top_k = j["top_k"].get<int>();
  }
  t.validate();
  return t;
}

}  // namespace wildharvest
