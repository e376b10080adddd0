#include "wildharvest/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/image_probe.hpp"
#include "wildharvest/manifest.hpp"
#include "wildharvest/rng.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

// --- timeline ------------------------------------------------------------------

RoundWindow window_for(int t, const TimelineConfig& cfg) {
  if (t < 1) throw TimelineError("rounds are numbered from 1");
  if (cfg.interval_months < 1) throw ConfigError("interval_months must be at least 1");
  return RoundWindow{t, cfg.anchor.add_months((t - 1) * cfg.interval_months),
                     cfg.anchor.add_months(t * cfg.interval_months).add_days(-1)};
}

int round_of(const Date& d, const TimelineConfig& cfg) {
  if (cfg.interval_months < 1) throw ConfigError("interval_months must be at least 1");
  if (d < cfg.anchor) return 1;
  int months = (d.year() - cfg.anchor.year()) * 12 + static_cast<int>(d.month()) - static_cast<int>(cfg.anchor.month());
  int t = std::max(1, months / cfg.interval_months + 1);
  while (t > 1 && d < window_for(t, cfg).start) --t;
  while (d > window_for(t, cfg).end) ++t;
  return t;
}

TimelinePartition partition_timeline(const std::vector<DatasetEntry>& entries, const TimelineConfig& cfg) {
  std::vector<std::string> undated;
  for (const auto& e : entries)
    if (!e.event_date) undated.push_back(e.image_id);
  if (!undated.empty()) {
    sort_unique(undated);
    throw UndatedEntryError(std::move(undated));
  }
  TimelinePartition p;
  int last = cfg.rounds.value_or(0);
  std::size_t early = 0;
  for (const auto& e : entries) {
    const int t = round_of(*e.event_date, cfg);
    if (cfg.rounds && t > *cfg.rounds)
      throw TimelineError("entry " + e.image_id + " dated " + e.event_date->to_string() + " falls after round " +
                          std::to_string(*cfg.rounds));
    if (*e.event_date < cfg.anchor) ++early;
    last = std::max(last, t);
    p.assignment[t].push_back(e.image_id);
  }
  if (early > 0)
    p.warnings.push_back(std::to_string(early) + " entries predate the timeline anchor " + cfg.anchor.to_string() +
                         "; assigned to round 1");
  for (int t = 1; t <= last; ++t) {
    p.windows.push_back(window_for(t, cfg));
    auto& ids = p.assignment[t];
    sort_unique(ids);
    if (ids.empty()) p.warnings.push_back("round " + std::to_string(t) + " has no entries");
  }
  for (const auto& w : p.warnings) spdlog::warn("{}", w);
  return p;
}

// --- replay ----------------------------------------------------------------------

std::size_t replay_size(double rho, std::size_t n) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("replay rho must lie in [0,1]");
  // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
  const double raw = std::floor(rho * static_cast<double>(n) + 1e-9);
  return std::min(n, static_cast<std::size_t>(raw));
}

namespace {

std::vector<DatasetEntry> dedup_by_id(std::vector<DatasetEntry> v) {
  std::sort(v.begin(), v.end(), [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_id < b.image_id; });
  v.erase(std::unique(v.begin(), v.end(),
                      [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_id == b.image_id; }),
          v.end());
  return v;
}

std::vector<DatasetEntry> take_shuffled(std::vector<DatasetEntry> v, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(v);
  v.resize(std::min(n, v.size()));
  return v;
}

DatasetEntry as_replay(DatasetEntry e, int round) {
  if (e.origin != Origin::replay) {
    e.source_origin = e.origin;
    e.origin = Origin::replay;
  }
  e.provenance.push_back("replay:round-" + std::to_string(round));
  sort_unique(e.provenance);
  return e;
}

}  // namespace

ReplayBuffer sample_replay(const std::vector<DatasetEntry>& pool_in, double rho, std::uint64_t seed, int round,
                           ReplayStrategy strategy) {
  ReplayBuffer buf;
  buf.round = round;
  buf.rho = rho;
  buf.seed = seed;
  const auto pool = dedup_by_id(pool_in);
  buf.source_pool_size = pool.size();
  const std::size_t size = replay_size(rho, pool.size());
  if (size == 0 && rho > 0.0 && !pool.empty())
    buf.warnings.push_back("replay buffer for round " + std::to_string(round) + " is empty: floor(" +
                           std::to_string(rho) + " * " + std::to_string(pool.size()) + ") = 0");

  std::vector<DatasetEntry> picked;
  if (strategy == ReplayStrategy::uniform) {
    picked = take_shuffled(pool, size, derive_seed(seed, "replay/uniform"));
  } else {
    std::vector<DatasetEntry> strata[2];
    for (const auto& e : pool) strata[e.label == kLabelGenerated ? 1 : 0].push_back(e);
    std::size_t alloc[2];
    for (int l = 0; l < 2; ++l)
      alloc[l] = pool.empty() ? 0 : size * strata[l].size() / pool.size();
    std::size_t rest = size - alloc[0] - alloc[1];
    // Remainder goes to the larger stratum; ties favor the generated label.
    const int larger = strata[0].size() > strata[1].size() ? 0 : 1;
    for (int l : {larger, 1 - larger}) {
      const std::size_t room = strata[l].size() - alloc[l];
      const std::size_t give = std::min(room, rest);
      alloc[l] += give;
      rest -= give;
    }
    for (int l = 0; l < 2; ++l) {
      auto part = take_shuffled(strata[l], alloc[l], derive_seed(seed, "replay/label-" + std::to_string(l)));
      picked.insert(picked.end(), part.begin(), part.end());
    }
  }
  for (auto& e : picked) buf.entries.push_back(as_replay(std::move(e), round));
  std::sort(buf.entries.begin(), buf.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_id < b.image_id; });
  for (const auto& w : buf.warnings) spdlog::warn("{}", w);
  return buf;
}

std::vector<DatasetEntry> accumulated_pool(const std::vector<DatasetManifest>& earlier, int t) {
  std::vector<std::vector<DatasetEntry>> parts;
  for (const auto& m : earlier) {
    if (m.round >= t) continue;
    std::vector<DatasetEntry> keep;
    for (const auto& e : m.entries)
      if (e.origin != Origin::replay) keep.push_back(e);
    parts.push_back(std::move(keep));
  }
  return merge_entries(parts);
}

// --- assembly --------------------------------------------------------------------

namespace {

int precedence(Origin o) {
  switch (o) {
    case Origin::itw: return 0;
    case Origin::gen: return 1;
    case Origin::real_pool: return 2;
    case Origin::replay: return 3;
  }
  return 3;
}

std::string without_provenance(DatasetEntry e) {
  e.provenance.clear();
  return dump_line(entry_to_json(e));
}

/// Commutative and associative: the winner is chosen by a total order.
DatasetEntry merge_pair(const DatasetEntry& a, const DatasetEntry& b) {
  if (a.label != b.label)
    throw LabelConflictError("image " + a.image_id + " is labeled " + std::to_string(a.label) + " (" +
                             std::string(to_string(a.origin)) + ") and " + std::to_string(b.label) + " (" +
                             std::string(to_string(b.origin)) + ")");
  const int pa = precedence(a.origin), pb = precedence(b.origin);
  bool a_wins;
  if (pa != pb) a_wins = pa < pb;
  else a_wins = without_provenance(a) <= without_provenance(b);
  DatasetEntry out = a_wins ? a : b;
  const DatasetEntry& other = a_wins ? b : a;
  out.provenance.insert(out.provenance.end(), other.provenance.begin(), other.provenance.end());
  sort_unique(out.provenance);
  return out;
}

}  // namespace

std::vector<DatasetEntry> merge_entries(const std::vector<std::vector<DatasetEntry>>& parts) {
  std::map<std::string, DatasetEntry> merged;
  for (const auto& part : parts)
    for (const auto& e : part) {
      auto [it, fresh] = merged.emplace(e.image_id, e);
      if (fresh) {
        sort_unique(it->second.provenance);
      } else {
        it->second = merge_pair(it->second, e);
      }
    }
  std::vector<DatasetEntry> out;
  out.reserve(merged.size());
  for (auto& [_, e] : merged) out.push_back(std::move(e));
  return out;
}

DatasetManifest assemble_round(const DatasetManifest& itw, const DatasetManifest& gen, const DatasetManifest& replay,
                               int t, std::uint64_t seed, const std::set<std::string>& test_ids,
                               const Timestamp& created_at) {
  auto stamp = [t](std::vector<DatasetEntry> v) {
    for (auto& e : v)
      if (e.origin != Origin::replay) e.round_introduced = t;
    return v;
  };
  for (const auto& e : replay.entries)
    if (e.round_introduced >= t)
      throw InvariantError("replay entry " + e.image_id + " was introduced in round " +
                           std::to_string(e.round_introduced) + ", not before round " + std::to_string(t));

  DatasetManifest out;
  out.manifest_id = "round-" + std::to_string(t);
  out.round = t;
  out.seed = seed;
  out.created_at = created_at;
  out.entries = merge_entries({stamp(itw.entries), stamp(gen.entries), replay.entries});
  std::vector<std::string> leaked;
  for (const auto& e : out.entries) {
    validate_entry(e);
    if (test_ids.count(e.image_id)) leaked.push_back(e.image_id);
  }
  if (!leaked.empty())
    throw LeakageError("round " + std::to_string(t) + " contains " + std::to_string(leaked.size()) +
                       " registered test image(s), first " + leaked.front());
  return out;
}

DatasetManifest subsample_portion(const DatasetManifest& m, double portion, std::uint64_t seed) {
  if (!(portion > 0.0 && portion <= 1.0)) throw ConfigError("portion must lie in (0,1]");
  std::map<std::pair<int, Origin>, std::vector<DatasetEntry>> strata;
  for (const auto& e : m.entries) strata[{e.label, e.origin}].push_back(e);

  const std::size_t target = static_cast<std::size_t>(std::floor(portion * static_cast<double>(m.entries.size()) + 1e-9));
  struct Alloc {
    std::pair<int, Origin> key;
    std::size_t n;
    double frac;
  };
  std::vector<Alloc> allocs;
  std::size_t assigned = 0;
  for (const auto& [key, v] : strata) {
    const double exact = portion * static_cast<double>(v.size());
    const double base = std::floor(exact + 1e-9);
    allocs.push_back(Alloc{key, static_cast<std::size_t>(base), std::max(0.0, exact - base)});
    assigned += static_cast<std::size_t>(base);
  }
  std::vector<std::size_t> order(allocs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return allocs[a].frac > allocs[b].frac; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    auto& a = allocs[order[i]];
    if (a.n < strata[a.key].size()) {
      ++a.n;
      ++assigned;
    }
  }

  DatasetManifest out = m;
  out.entries.clear();
  for (const auto& a : allocs) {
    auto v = strata[a.key];
    std::sort(v.begin(), v.end(), [](const DatasetEntry& x, const DatasetEntry& y) { return x.image_id < y.image_id; });
    const std::string label = "portion/" + std::to_string(a.key.first) + "/" + std::string(to_string(a.key.second));
    auto part = take_shuffled(std::move(v), a.n, derive_seed(seed, label));
    out.entries.insert(out.entries.end(), part.begin(), part.end());
  }
  canonicalize(out);
  return out;
}

// --- rounds and jobs -------------------------------------------------------------

json to_json(const UpdateRound& r) {
  return json{{"t", r.t},
              {"window_start", r.window.start.to_string()},
              {"window_end", r.window.end.to_string()},
              {"itw_manifest", r.itw_manifest},
              {"gen_manifest", r.gen_manifest},
              {"replay_manifest", r.replay_manifest},
              {"assembled_manifest", r.assembled_manifest},
              {"seed", r.seed}};
}

UpdateRound update_round_from_json(const json& j) {
  UpdateRound r;
  r.t = static_cast<int>(require_int(j, "t"));
  r.window = RoundWindow{r.t, Date::parse(require_string(j, "window_start")), Date::parse(require_string(j, "window_end"))};
  r.itw_manifest = require_string(j, "itw_manifest");
  r.gen_manifest = require_string(j, "gen_manifest");
  r.replay_manifest = require_string(j, "replay_manifest");
  r.assembled_manifest = require_string(j, "assembled_manifest");
  r.seed = require(j, "seed").get<std::uint64_t>();
  if (r.window.end < r.window.start) throw InvariantError("round window ends before it starts");
  return r;
}

void write_round_state(const fs::path& path, const UpdateRound& r) { write_file_atomic(path, to_json(r).dump(2) + "\n"); }

UpdateRound read_round_state(const fs::path& path) { return update_round_from_json(read_json(path)); }

json to_json(const TrainingJob& j) {
  return json{{"job_id", j.job_id},
              {"round", j.round},
              {"manifest_id", j.manifest_id},
              {"manifest_hash", j.manifest_hash},
              {"detector_backend", j.detector_backend},
              {"backend_job_id", j.backend_job_id},
              {"hyperparameters", j.hyperparameters}};
}

TrainingJob training_job_from_json(const json& j) {
  TrainingJob t;
  t.job_id = require_string(j, "job_id");
  t.round = static_cast<int>(require_int(j, "round"));
  t.manifest_id = require_string(j, "manifest_id");
  t.manifest_hash = require_string(j, "manifest_hash");
  t.detector_backend = require_string(j, "detector_backend");
  t.backend_job_id = require_string(j, "backend_job_id");
  t.hyperparameters = require(j, "hyperparameters");
  return t;
}

TrainingJob emit_training_job(const UpdateRound& round, const DatasetManifest& assembled, TrainerBackend& backend,
                              const json& hyperparameters, const fs::path& jobs_path, std::vector<std::string>* warnings) {
  if (round.assembled_manifest.empty()) throw InvariantError("round " + std::to_string(round.t) + " is not assembled");
  if (assembled.manifest_id != round.assembled_manifest || assembled.round != round.t)
    throw InvariantError("manifest " + assembled.manifest_id + " does not belong to round " + std::to_string(round.t));
  {
    DatasetManifest check = assembled;
    canonicalize(check);
    for (const auto& e : check.entries) validate_entry(e);
  }

  std::vector<json> rows;
  if (fs::exists(jobs_path)) rows = read_jsonl(jobs_path);
  int previous = 0;
  for (const auto& r : rows)
    if (require_int(r, "round") == round.t) ++previous;
  if (previous > 0) {
    const std::string msg = "round " + std::to_string(round.t) + " already has " + std::to_string(previous) + " job(s)";
    spdlog::warn("{}", msg);
    if (warnings) warnings->push_back(msg);
  }

  TrainingJob job;
  job.round = round.t;
  job.manifest_id = assembled.manifest_id;
  job.manifest_hash = manifest_hash(assembled);
  job.detector_backend = backend.descriptor().endpoint;
  job.hyperparameters = hyperparameters.is_null() ? json::object() : hyperparameters;

  const TrainerAck ack = backend.submit(TrainerRequest{round.t, job.manifest_id, job.manifest_hash, job.hyperparameters});
  if (!ack.accepted) throw JobRejected("trainer rejected round " + std::to_string(round.t) + ": " + ack.message);

  job.job_id = "round-" + std::to_string(round.t) + "-job-" + std::to_string(previous + 1);
  job.backend_job_id = ack.job_id;
  rows.push_back(to_json(job));
  if (jobs_path.has_parent_path()) fs::create_directories(jobs_path.parent_path());
  write_jsonl(jobs_path, rows);
  return job;
}

// --- generator registry -------------------------------------------------------------

int default_test_count(int size) {
  if (size <= 0) throw RegistryError("registry row size must be positive");
  return std::max(1, static_cast<int>(std::lround(0.1 * size)));
}

std::set<std::string> GeneratorRegistry::test_ids() const {
  std::set<std::string> out;
  for (const auto& r : rows) out.insert(r.test_ids.begin(), r.test_ids.end());
  return out;
}

const GeneratorRow* GeneratorRegistry::find(const std::string& models) const {
  for (const auto& r : rows)
    if (r.models == models) return &r;
  return nullptr;
}

namespace {

std::string models_of(const json& row) {
  const json& m = require(row, "models");
  if (m.is_string()) return m.get<std::string>();
  if (m.is_array()) {
    std::string out;
    for (const auto& x : m) {
      if (!x.is_string()) throw RegistryError("model names must be strings");
      if (!out.empty()) out += ", ";
      out += x.get<std::string>();
    }
    return out;
  }
  throw RegistryError("models must be a string or a list of strings");
}

GeneratorRow parse_row(const json& row, std::uint64_t seed, const fs::path& base_dir, ContentStore* store) {
  GeneratorRow g;
  g.models = models_of(row);
  if (g.models.empty()) throw RegistryError("row without model names");
  const std::string release = require_string(row, "release");
  try {
    g.release = release.size() == 7 ? Date::parse_month(release) : Date::parse(release);
  } catch (const InvariantError&) {
    throw RegistryError(g.models + ": bad release date '" + release + "'");
  }
  g.size = static_cast<int>(require_int(row, "size"));
  if (g.size <= 0) throw RegistryError(g.models + ": size must be positive");
  const bool has_train = row.contains("train"), has_test = row.contains("test");
  if (has_train != has_test) throw RegistryError(g.models + ": give both train and test counts or neither");
  if (has_train) {
    g.train = static_cast<int>(require_int(row, "train"));
    g.test = static_cast<int>(require_int(row, "test"));
    g.explicit_split = true;
    if (g.train < 0 || g.test < 0) throw RegistryError(g.models + ": negative split count");
    if (g.train + g.test != g.size)
      throw RegistryError(g.models + ": split " + std::to_string(g.train) + "/" + std::to_string(g.test) +
                          " does not sum to size " + std::to_string(g.size));
  } else {
    g.test = default_test_count(g.size);
    g.train = g.size - g.test;
  }
  if (row.contains("images")) {
    const auto files = string_array(row, "images");
    if (static_cast<int>(files.size()) != g.size)
      throw RegistryError(g.models + ": lists " + std::to_string(files.size()) + " images for size " +
                          std::to_string(g.size));
    for (const auto& f : files) {
      const Bytes bytes = read_bytes(base_dir / f);
      std::string id;
      if (store) {
        const auto info = probe_image(bytes);
        if (!info) throw RegistryError(g.models + ": " + f + " is not an image");
        id = store->put(bytes, ImageMeta{info->format, info->width, info->height, {}});
      } else {
        id = hash_content(bytes);
      }
      g.image_ids.push_back(id);
    }
    std::vector<std::string> ids = g.image_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw RegistryError(g.models + ": duplicate image bytes");
    Rng rng(derive_seed(seed, "registry/" + g.models));
    rng.shuffle(ids);
    g.test_ids.assign(ids.begin(), ids.begin() + g.test);
    g.train_ids.assign(ids.begin() + g.test, ids.end());
    std::sort(g.test_ids.begin(), g.test_ids.end());
    std::sort(g.train_ids.begin(), g.train_ids.end());
  }
  return g;
}

}  // namespace

GeneratorRegistry registry_from_json(const json& doc, std::uint64_t seed, RegistryMode mode, const fs::path& base_dir,
                                     ContentStore* store) {
  if (!doc.is_object() || doc.value("format", std::string{}) != "wildharvest.registry")
    throw RegistryError("not a wildharvest registry document");
  if (doc.value("version", 0) != 1) throw RegistryError("unsupported registry version");
  const json& rows = require(doc, "rows");
  if (!rows.is_array()) throw RegistryError("registry rows must be an array");
  GeneratorRegistry reg;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      reg.rows.push_back(parse_row(rows[i], seed, base_dir, store));
    } catch (const Error& e) {
      const std::string msg = std::string("row ") + std::to_string(i + 1) + ": " + e.what();
      if (mode == RegistryMode::strict) throw RegistryError(msg);
      std::string models;
      try {
        models = models_of(rows[i]);
      } catch (const Error&) {
      }
      spdlog::warn("registry {}", msg);
      reg.issues.push_back(RegistryIssue{i + 1, models, e.what()});
    }
  }
  return reg;
}

GeneratorRegistry register_generators(const fs::path& file, std::uint64_t seed, RegistryMode mode, ContentStore* store) {
  return registry_from_json(read_json(file), seed, mode, file.parent_path(), store);
}

json to_json(const GeneratorRegistry& r) {
  json rows = json::array();
  for (const auto& g : r.rows) {
    const std::string month = g.release.to_string().substr(0, 7);
    rows.push_back(json{{"models", g.models},
                        {"release", month},
                        {"size", g.size},
                        {"train", g.train},
                        {"test", g.test},
                        {"explicit_split", g.explicit_split},
                        {"train_ids", g.train_ids},
                        {"test_ids", g.test_ids}});
  }
  json issues = json::array();
  for (const auto& i : r.issues) issues.push_back(json{{"row", i.row}, {"models", i.models}, {"message", i.message}});
  return json{{"rows", rows}, {"issues", issues}};
}

}  // namespace wildharvest
