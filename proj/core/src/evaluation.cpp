#include "wildharvest/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/records.hpp"
#include "wildharvest/rng.hpp"

namespace wildharvest {

json to_json(const ScoreRecord& r) {
  json j{{"image_id", r.image_id}, {"score", r.score}, {"label", r.label}, {"dataset", r.dataset}};
  if (r.generator) j["generator"] = *r.generator;
  if (r.task) j["task"] = *r.task;
  return j;
}

ScoreRecord score_record_from_json(const json& j) {
  static const std::set<std::string> known{"image_id", "score", "label", "dataset", "generator", "task"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw InvariantError("unknown score field '" + k + "'");
  ScoreRecord r;
  r.image_id = require_string(j, "image_id");
  r.score = require_number(j, "score");
  if (!std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0)
    throw InvariantError("score of " + r.image_id + " is outside [0,1]");
  r.label = static_cast<int>(require_int(j, "label"));
  if (r.label != kLabelReal && r.label != kLabelGenerated) throw InvariantError("label must be 0 or 1");
  r.dataset = require_string(j, "dataset");
  if (j.contains("generator") && !j["generator"].is_null()) r.generator = require_string(j, "generator");
  if (j.contains("task") && !j["task"].is_null()) r.task = static_cast<int>(require_int(j, "task"));
  return r;
}

std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path) {
  return read_records<ScoreRecord>(path, score_record_from_json);
}

double auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty())
    throw SingleClassError("AUC needs at least one positive and one negative");
  struct Item {
    double score;
    bool pos;
  };
  std::vector<Item> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Sum of positive midranks, doubled to stay in integers.
  long double twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const long double twice_mid = static_cast<long double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].pos) twice_rank_sum += twice_mid;
    i = j;
  }
  const long double np = positives.size(), nn = negatives.size();
  const long double u = twice_rank_sum / 2 - np * (np + 1) / 2;
  return static_cast<double>(u / (np * nn));
}

double auc(const std::vector<ScoreRecord>& records) {
  std::vector<double> pos, neg;
  for (const auto& r : records) (r.label == kLabelGenerated ? pos : neg).push_back(r.score);
  return auc(pos, neg);
}

double acc(const std::vector<ScoreRecord>& records, double threshold) {
  if (records.empty()) throw InvariantError("accuracy of an empty record set");
  std::size_t correct = 0;
  for (const auto& r : records)
    if ((r.score >= threshold) == (r.label == kLabelGenerated)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

Metrics compute_metrics(const std::vector<ScoreRecord>& records, double threshold) {
  Metrics m;
  for (const auto& r : records) (r.label == kLabelGenerated ? m.n_pos : m.n_neg)++;
  m.acc = acc(records, threshold);
  if (m.n_pos > 0 && m.n_neg > 0) m.auc = auc(records);
  return m;
}

Groupings parse_groupings(const std::string& spec) {
  Groupings g{false, false, false};
  std::stringstream in(spec);
  for (std::string part; std::getline(in, part, ',');) {
    if (part == "dataset") g.dataset = true;
    else if (part == "generator") g.generator = true;
    else if (part == "task") g.task = true;
    else if (!part.empty()) throw ConfigError("unknown grouping '" + part + "'");
  }
  return g;
}

namespace {

Average average_of(const std::map<std::string, Metrics>& cells) {
  Average a;
  if (cells.empty()) return a;
  double acc_sum = 0.0, auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (const auto& [_, m] : cells) {
    acc_sum += m.acc;
    if (m.auc) {
      auc_sum += *m.auc;
      ++auc_n;
    }
  }
  a.acc = acc_sum / static_cast<double>(cells.size());
  // AUC average only when every dataset has one, as a partial mean is not comparable.
  if (auc_n == cells.size()) a.auc = auc_sum / static_cast<double>(auc_n);
  return a;
}

std::map<std::string, Metrics> by_dataset(const std::vector<ScoreRecord>& records, double threshold) {
  std::map<std::string, std::vector<ScoreRecord>> groups;
  for (const auto& r : records) groups[r.dataset].push_back(r);
  std::map<std::string, Metrics> out;
  for (const auto& [name, g] : groups) out.emplace(name, compute_metrics(g, threshold));
  return out;
}

double pct(double v) { return std::round(v * 10000.0) / 100.0; }

}  // namespace

EvaluationReport build_report(const std::vector<ScoreRecord>& records, const Groupings& groupings, double threshold) {
  EvaluationReport rep;
  rep.threshold = threshold;
  auto warn = [&rep](std::string msg) {
    spdlog::warn("{}", msg);
    rep.warnings.push_back(std::move(msg));
  };
  if (records.empty()) {
    warn("no score records");
    return rep;
  }

  std::set<int> tasks;
  for (const auto& r : records)
    if (r.task) tasks.insert(*r.task);
  const bool has_tasks = !tasks.empty();
  if (has_tasks && std::any_of(records.begin(), records.end(), [](const ScoreRecord& r) { return !r.task; }))
    throw InvariantError("score file mixes records with and without task ids");

  std::vector<ScoreRecord> latest;
  if (has_tasks) {
    for (const auto& r : records)
      if (*r.task == *tasks.rbegin()) latest.push_back(r);
  } else {
    latest = records;
  }

  if (groupings.dataset) {
    rep.per_dataset = by_dataset(latest, threshold);
    rep.average = average_of(rep.per_dataset);
  }

  if (groupings.generator) {
    std::map<std::string, std::vector<ScoreRecord>> groups;
    for (const auto& r : latest)
      if (r.generator && !r.generator->empty()) groups[*r.generator].push_back(r);
    if (groups.empty()) warn("generator grouping requested but no record names a generator");
    for (const auto& [name, g] : groups) rep.per_generator.emplace(name, compute_metrics(g, threshold));
  }

  if (groupings.task) {
    if (!has_tasks) {
      warn("task grouping requested but no record carries a task id");
    } else {
      std::map<int, std::vector<ScoreRecord>> groups;
      for (const auto& r : records) groups[*r.task].push_back(r);
      std::set<std::string> datasets;
      for (const auto& r : records) datasets.insert(r.dataset);
      for (const auto& [t, g] : groups) {
        rep.per_task[t] = by_dataset(g, threshold);
        rep.per_task_average[t] = average_of(rep.per_task[t]);
        for (const auto& d : datasets)
          if (!rep.per_task[t].count(d)) warn("task " + std::to_string(t) + " has no records for dataset " + d);
      }
      for (const auto& [a, ca] : rep.per_task)
        for (const auto& [b, cb] : rep.per_task) {
          if (a == b) continue;
          for (const auto& [d, ma] : ca) {
            auto it = cb.find(d);
            if (it == cb.end()) continue;
            Delta delta{a, b, d, std::nullopt, (it->second.acc - ma.acc) * 100.0};
            if (ma.auc && it->second.auc) delta.auc_pp = (*it->second.auc - *ma.auc) * 100.0;
            rep.deltas.push_back(delta);
          }
        }
    }
  }
  return rep;
}

double forgetting_delta(const EvaluationReport& report, int task_a, int task_b, const std::string& dataset,
                        Metric metric) {
  auto cell = [&](int t) -> const Metrics& {
    auto tt = report.per_task.find(t);
    if (tt == report.per_task.end()) throw MissingCellError("no results for task " + std::to_string(t));
    auto dd = tt->second.find(dataset);
    if (dd == tt->second.end())
      throw MissingCellError("no results for task " + std::to_string(t) + " on dataset " + dataset);
    return dd->second;
  };
  const Metrics& a = cell(task_a);
  const Metrics& b = cell(task_b);
  if (metric == Metric::acc) return (b.acc - a.acc) * 100.0;
  if (!a.auc || !b.auc) throw MissingCellError("AUC undefined for dataset " + dataset + " in one of the tasks");
  return (*b.auc - *a.auc) * 100.0;
}

namespace {

json metrics_json(const Metrics& m) {
  json j{{"acc", pct(m.acc)}, {"n_pos", m.n_pos}, {"n_neg", m.n_neg}};
  j["auc"] = m.auc ? json(pct(*m.auc)) : json(nullptr);
  return j;
}

json average_json(const Average& a) {
  return json{{"auc", a.auc ? json(pct(*a.auc)) : json(nullptr)}, {"acc", a.acc ? json(pct(*a.acc)) : json(nullptr)}};
}

std::string fmt_pct(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << pct(*v);
  return o.str();
}

void render_rows(std::ostringstream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << (c ? " | " : "") << cells[c] << std::string(width[c] - cells[c].size(), ' ');
    }
    out << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
}

}  // namespace

json to_json(const EvaluationReport& r) {
  json j;
  j["threshold"] = r.threshold;
  j["per_dataset"] = json::object();
  for (const auto& [d, m] : r.per_dataset) j["per_dataset"][d] = metrics_json(m);
  j["average"] = average_json(r.average);
  j["per_generator"] = json::object();
  for (const auto& [g, m] : r.per_generator) j["per_generator"][g] = metrics_json(m);
  j["per_task"] = json::object();
  for (const auto& [t, cells] : r.per_task) {
    json row = json::object();
    for (const auto& [d, m] : cells) row[d] = metrics_json(m);
    j["per_task"][std::to_string(t)] = json{{"datasets", row}, {"average", average_json(r.per_task_average.at(t))}};
  }
  j["deltas"] = json::array();
  for (const auto& d : r.deltas)
    j["deltas"].push_back(json{{"task_a", d.task_a},
                               {"task_b", d.task_b},
                               {"dataset", d.dataset},
                               {"auc_pp", d.auc_pp ? json(std::round(*d.auc_pp * 100.0) / 100.0) : json(nullptr)},
                               {"acc_pp", std::round(d.acc_pp * 100.0) / 100.0}});
  j["warnings"] = r.warnings;
  return j;
}

std::string render_table(const EvaluationReport& r) {
  std::ostringstream out;
  std::vector<std::string> datasets;
  for (const auto& [d, _] : r.per_dataset) datasets.push_back(d);
  if (!datasets.empty()) {
    out << "AUC / ACC (%)\n";
    std::vector<std::string> header{"model"};
    header.insert(header.end(), datasets.begin(), datasets.end());
    header.push_back("AVG");
    std::vector<std::string> row{"detector"};
    for (const auto& d : datasets) {
      const auto& m = r.per_dataset.at(d);
      row.push_back(fmt_pct(m.auc) + " / " + fmt_pct(m.acc));
    }
    row.push_back(fmt_pct(r.average.auc) + " / " + fmt_pct(r.average.acc));
    render_rows(out, header, {row});
  }
  if (!r.per_task.empty()) {
    std::set<std::string> all;
    for (const auto& [_, cells] : r.per_task)
      for (const auto& [d, __] : cells) all.insert(d);
    out << "\nAUC per task (%)\n";
    std::vector<std::string> header{"task"};
    header.insert(header.end(), all.begin(), all.end());
    header.push_back("AVG");
    std::vector<std::vector<std::string>> rows;
    for (const auto& [t, cells] : r.per_task) {
      std::vector<std::string> row{"Task " + std::to_string(t)};
      for (const auto& d : all) {
        auto it = cells.find(d);
        row.push_back(it == cells.end() ? "-" : fmt_pct(it->second.auc));
      }
      row.push_back(fmt_pct(r.per_task_average.at(t).auc));
      rows.push_back(row);
    }
    render_rows(out, header, rows);
  }
  if (!r.per_generator.empty()) {
    out << "\nACC per generator (%)\n";
    std::vector<std::vector<std::string>> rows;
    for (const auto& [g, m] : r.per_generator) rows.push_back({g, fmt_pct(m.acc), std::to_string(m.n_pos + m.n_neg)});
    render_rows(out, {"generator", "ACC", "n"}, rows);
  }
  return out.str();
}

// --- validation precision ----------------------------------------------------------

std::vector<std::string> sample_for_validation(const DatasetManifest& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("sample fraction must lie in (0,1]");
  std::vector<std::string> ids;
  for (const auto& e : m.entries)
    if (e.label == kLabelGenerated) ids.push_back(e.image_id);
  sort_unique(ids);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  Rng rng(derive_seed(seed, "validation-sample"));
  rng.shuffle(ids);
  ids.resize(std::min(n, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::map<std::string, bool> read_annotations(const std::filesystem::path& path) {
  std::map<std::string, bool> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const std::string id = require_string(rows[i], "image_id");
      const std::string verdict = require_string(rows[i], "verdict");
      if (verdict != "correct" && verdict != "incorrect")
        throw InvariantError("verdict must be correct or incorrect, got '" + verdict + "'");
      out[id] = verdict == "correct";
    } catch (const InvariantError& e) {
      throw ParseError(path.string() + ": " + e.what(), i + 1);
    }
  }
  return out;
}

PrecisionResult validation_precision(const DatasetManifest& m, double fraction, std::uint64_t seed,
                                     const std::map<std::string, bool>& annotations) {
  PrecisionResult r;
  for (const auto& e : m.entries)
    if (e.label == kLabelGenerated) ++r.population;
  r.sample = sample_for_validation(m, fraction, seed);
  r.sampled_n = r.sample.size();
  std::map<std::string, std::string> parent;
  for (const auto& e : m.entries)
    if (e.parent_image_id) parent[e.image_id] = *e.parent_image_id;
  std::vector<std::string> missing;
  for (const auto& id : r.sample) {
    auto it = annotations.find(id);
    if (it == annotations.end())
      if (auto p = parent.find(id); p != parent.end()) it = annotations.find(p->second);
    if (it == annotations.end()) {
      missing.push_back(id);
      continue;
    }
    if (it->second) ++r.correct;
  }
  if (!missing.empty()) throw IncompleteAnnotationError(std::move(missing));
  r.precision = r.sampled_n == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.sampled_n);
  return r;
}

std::vector<json> annotation_worksheet(const DatasetManifest& m, const std::vector<std::string>& sample) {
  std::map<std::string, const DatasetEntry*> by_id;
  for (const auto& e : m.entries) by_id[e.image_id] = &e;
  std::vector<json> rows;
  for (const auto& id : sample) {
    json row{{"image_id", id}, {"verdict", nullptr}};
    if (auto it = by_id.find(id); it != by_id.end()) {
      if (it->second->parent_image_id) row["parent_image_id"] = *it->second->parent_image_id;
      row["provenance"] = it->second->provenance;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace wildharvest
