#include "wildharvest/backends.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wildharvest/errors.hpp"
#include "wildharvest/http.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

BackendDescriptor backend_from_json(const std::string& name, const json& j) {
  if (j.is_string()) {
    BackendDescriptor d;
    d.backend_name = name;
    d.endpoint = j.get<std::string>();
    return d;
  }
  if (!j.is_object()) throw ConfigError("backend " + name + " must be an object or an endpoint string");
  BackendDescriptor d;
  d.backend_name = j.value("backend_name", name);
  if (!j.contains("endpoint") || !j["endpoint"].is_string()) throw ConfigError("backend " + name + " needs an endpoint");
  d.endpoint = j["endpoint"].get<std::string>();
  d.model_id = j.value("model_id", std::string{});
  d.model_version = j.value("model_version", d.model_version);
  d.temperature = j.value("temperature", 0.0);
  d.dim = j.value("dim", 0);
  if (j.contains("query_vocabulary")) d.query_vocabulary = string_array(j, "query_vocabulary");
  d.concurrency = j.value("concurrency", std::size_t{4});
  if (d.temperature != 0.0) throw ConfigError("backend " + name + ": temperature is pinned to 0");
  if (d.concurrency == 0) throw ConfigError("backend " + name + ": concurrency must be positive");
  if (!d.is_mock() && d.endpoint.rfind("http://", 0) != 0 && d.endpoint.rfind("https://", 0) != 0)
    throw ConfigError("backend " + name + ": endpoint must be mock: or http(s)://");
  return d;
}

json to_json(const BackendDescriptor& d) {
  return json{{"backend_name", d.backend_name}, {"endpoint", d.endpoint},       {"model_id", d.model_id},
              {"model_version", d.model_version}, {"temperature", d.temperature}, {"dim", d.dim},
              {"query_vocabulary", d.query_vocabulary}, {"concurrency", d.concurrency}};
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

double normalize_elicited_score(double raw) {
  if (!std::isfinite(raw)) throw BackendUnavailable("scorer returned a non-finite score");
  return std::clamp(raw / 100.0, 0.0, 1.0);
}

std::vector<double> mock_embedding(const std::string& image_id, int dim) {
  if (dim <= 0) throw ConfigError("embedding dimension must be positive");
  Bytes stream = is_content_hash(image_id) ? hex_decode(image_id) : sha256_raw(as_bytes(image_id));
  Bytes block = stream;
  while (stream.size() < static_cast<std::size_t>(dim)) {
    block = sha256_raw(block);
    stream.insert(stream.end(), block.begin(), block.end());
  }
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = stream[i] / 127.5 - 1.0;
  return v;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& spec) {
  fs::path p = spec;
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

/// Loads a JSONL fixture table, keyed by `key_of(row)`.
template <typename KeyFn>
std::map<std::string, json> load_table(const fs::path& path, KeyFn key_of) {
  std::map<std::string, json> table;
  if (!fs::exists(path)) throw ConfigError("mock fixture " + path.string() + " does not exist");
  for (auto& row : read_jsonl(path)) {
    std::string key = key_of(row);
    table[std::move(key)] = std::move(row);
  }
  return table;
}

// --- text ---------------------------------------------------------------

class MockTextBackend final : public TextModelBackend {
 public:
  MockTextBackend(BackendDescriptor d, const fs::path& base) : d_(std::move(d)) {
    if (!d_.mock_spec().empty())
      table_ = load_table(resolve(base, d_.mock_spec()), [](const json& r) { return require_string(r, "article_id"); });
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  json complete(const TextRequest& req) override {
    auto it = table_.find(req.article_id);
    if (it == table_.end()) throw BackendUnavailable("mock text backend has no response for article " + req.article_id);
    if (it->second.value("unreachable", false)) throw BackendUnavailable("mock text backend marked unreachable for " + req.article_id);
    return require(it->second, "response");
  }

 private:
  BackendDescriptor d_;
  std::map<std::string, json> table_;
};

class HttpTextBackend final : public TextModelBackend {
 public:
  explicit HttpTextBackend(BackendDescriptor d) : d_(std::move(d)) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  json complete(const TextRequest& req) override {
    HttpClient client;
    auto res = client.post_json(d_.endpoint, json{{"prompt", req.prompt},
                                                  {"input", req.input},
                                                  {"model", d_.model_id},
                                                  {"temperature", d_.temperature}});
    try {
      return json::parse(res.body);
    } catch (const json::parse_error&) {
      throw ExtractionSchemaError("backend reply for " + req.article_id + " is not JSON");
    }
  }

 private:
  BackendDescriptor d_;
};

// --- scorer -------------------------------------------------------------

class MockScorer final : public ImageTextScorer {
 public:
  MockScorer(BackendDescriptor d, const fs::path& base) : d_(std::move(d)) {
    const std::string spec = d_.mock_spec();
    if (spec.rfind("constant=", 0) == 0) {
      constant_ = std::stod(spec.substr(9));
    } else if (!spec.empty()) {
      table_ = load_table(resolve(base, spec), [](const json& r) {
        return require_string(r, "image_id") + "\n" + r.value("caption", std::string{});
      });
    }
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  double score(const ImageRef& image, const std::string& caption, const std::string&) override {
    if (constant_) return normalize_elicited_score(*constant_);
    if (auto f = table_.find(image.image_id + "\n"); f != table_.end() && f->second.value("fail", false))
      throw BackendUnavailable("mock scorer configured to fail on " + image.image_id);
    if (auto it = table_.find(image.image_id + "\n" + caption); it != table_.end())
      return normalize_elicited_score(require_number(it->second, "score"));
    const auto digest = sha256_raw(as_bytes(image.image_id + "\n" + caption));
    return normalize_elicited_score(static_cast<double>((digest[0] << 8 | digest[1]) % 101));
  }

 private:
  BackendDescriptor d_;
  std::optional<double> constant_;
  std::map<std::string, json> table_;
};

class HttpScorer final : public ImageTextScorer {
 public:
  explicit HttpScorer(BackendDescriptor d) : d_(std::move(d)) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  double score(const ImageRef& image, const std::string& caption, const std::string& prompt) override {
    HttpClient client;
    auto res = client.post_json(d_.endpoint, json{{"image", base64_encode(image.bytes)},
                                                  {"image_id", image.image_id},
                                                  {"caption", caption},
                                                  {"prompt", prompt},
                                                  {"model", d_.model_id}});
    json body;
    try {
      body = json::parse(res.body);
    } catch (const json::parse_error&) {
      throw BackendUnavailable("scorer reply is not JSON");
    }
    if (!body.is_object() || !body.contains("score") || !body["score"].is_number())
      throw BackendUnavailable("scorer reply lacks a numeric score");
    return normalize_elicited_score(body["score"].get<double>());
  }

 private:
  BackendDescriptor d_;
};

// --- embedder -----------------------------------------------------------

class MockEmbedder final : public EmbeddingBackend {
 public:
  MockEmbedder(BackendDescriptor d, const fs::path& base) : d_(std::move(d)) {
    if (d_.mock_spec().empty()) return;
    table_ = load_table(resolve(base, d_.mock_spec()), [](const json& r) { return require_string(r, "image_id"); });
    for (const auto& [id, row] : table_)
      if (!row.contains("vector") || !row["vector"].is_array() || static_cast<int>(row["vector"].size()) != d_.dim)
        throw ConfigError("mock embedding for " + id + " does not have dimension " + std::to_string(d_.dim));
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  std::vector<double> embed(const ImageRef& image) override {
    if (auto it = table_.find(image.image_id); it != table_.end()) return it->second["vector"].get<std::vector<double>>();
    return mock_embedding(image.image_id, d_.dim);
  }

 private:
  BackendDescriptor d_;
  std::map<std::string, json> table_;
};

class HttpEmbedder final : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(BackendDescriptor d) : d_(std::move(d)) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  std::vector<double> embed(const ImageRef& image) override {
    HttpClient client;
    auto res = client.post_json(d_.endpoint, json{{"image", base64_encode(image.bytes)},
                                                  {"image_id", image.image_id},
                                                  {"model", d_.model_id}});
    json body;
    try {
      body = json::parse(res.body);
    } catch (const json::parse_error&) {
      throw BackendUnavailable("embedder reply is not JSON");
    }
    if (!body.is_object() || !body.contains("vector") || !body["vector"].is_array())
      throw BackendUnavailable("embedder reply lacks a vector");
    auto v = body["vector"].get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d_.dim)
      throw DimensionError("embedder returned " + std::to_string(v.size()) + " dims, expected " + std::to_string(d_.dim));
    return v;
  }

 private:
  BackendDescriptor d_;
};

// --- segmenter ----------------------------------------------------------

std::vector<ScoredBox> boxes_from_json(const json& arr) {
  if (!arr.is_array()) throw BackendUnavailable("segmenter boxes must be an array");
  std::vector<ScoredBox> out;
  for (const auto& b : arr) {
    ScoredBox sb;
    sb.box = BoundingBox{static_cast<int>(require_int(b, "x")), static_cast<int>(require_int(b, "y")),
                         static_cast<int>(require_int(b, "w")), static_cast<int>(require_int(b, "h"))};
    sb.confidence = std::clamp(require_number(b, "confidence"), 0.0, 1.0);
    out.push_back(sb);
  }
  return out;
}

class MockSegmenter final : public SegmenterBackend {
 public:
  MockSegmenter(BackendDescriptor d, const fs::path& base) : d_(std::move(d)) {
    if (!d_.mock_spec().empty())
      table_ = load_table(resolve(base, d_.mock_spec()), [](const json& r) { return require_string(r, "image_id"); });
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  std::vector<ScoredBox> segment(const ImageRef& image, const ImageInfo& info, const std::vector<std::string>&) override {
    if (auto it = table_.find(image.image_id); it != table_.end()) {
      if (it->second.value("fail", false)) throw BackendUnavailable("mock segmenter configured to fail on " + image.image_id);
      return boxes_from_json(require(it->second, "boxes"));
    }
    // Fallback: one centered box covering the middle 3/4, confidence from the hash.
    const auto digest = sha256_raw(as_bytes("segment\n" + image.image_id));
    ScoredBox sb;
    sb.box = BoundingBox{info.width / 8, info.height / 8, info.width * 3 / 4, info.height * 3 / 4};
    sb.confidence = digest[0] / 255.0;
    return {sb};
  }

 private:
  BackendDescriptor d_;
  std::map<std::string, json> table_;
};

class HttpSegmenter final : public SegmenterBackend {
 public:
  explicit HttpSegmenter(BackendDescriptor d) : d_(std::move(d)) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  std::vector<ScoredBox> segment(const ImageRef& image, const ImageInfo&, const std::vector<std::string>& queries) override {
    HttpClient client;
    auto res = client.post_json(d_.endpoint, json{{"image", base64_encode(image.bytes)},
                                                  {"image_id", image.image_id},
                                                  {"queries", queries},
                                                  {"model", d_.model_id}});
    json body;
    try {
      body = json::parse(res.body);
    } catch (const json::parse_error&) {
      throw BackendUnavailable("segmenter reply is not JSON");
    }
    try {
      return boxes_from_json(require(body, "boxes"));
    } catch (const InvariantError& e) {
      throw BackendUnavailable(std::string("segmenter reply malformed: ") + e.what());
    }
  }

 private:
  BackendDescriptor d_;
};

// --- trainer ------------------------------------------------------------

class MockTrainer final : public TrainerBackend {
 public:
  MockTrainer(BackendDescriptor d, fs::path ledger) : d_(std::move(d)), ledger_(std::move(ledger)) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  TrainerAck submit(const TrainerRequest& req) override {
    std::lock_guard lock(mutex_);
    std::size_t calls = 0;
    if (fs::exists(ledger_)) calls = read_jsonl(ledger_).size();
    TrainerAck ack;
    ack.accepted = d_.mock_spec() != "reject";
    ack.job_id = ack.accepted ? "mock-" + std::to_string(calls + 1) : "";
    ack.message = ack.accepted ? "accepted" : "mock trainer configured to reject";
    json row{{"round", req.round},
             {"manifest_id", req.manifest_id},
             {"manifest_hash", req.manifest_hash},
             {"hyperparameters", req.hyperparameters},
             {"accepted", ack.accepted},
             {"job_id", ack.job_id}};
    if (ledger_.has_parent_path()) fs::create_directories(ledger_.parent_path());
    std::ofstream out(ledger_, std::ios::app | std::ios::binary);
    out << dump_line(row) << '\n';
    return ack;
  }

 private:
  BackendDescriptor d_;
  fs::path ledger_;
  std::mutex mutex_;
};

class HttpTrainer final : public TrainerBackend {
 public:
  explicit HttpTrainer(BackendDescriptor d) : d_(std::move(d)) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  TrainerAck submit(const TrainerRequest& req) override {
    HttpClient client;
    auto res = client.post_json(d_.endpoint, json{{"manifest_id", req.manifest_id},
                                                  {"manifest_hash", req.manifest_hash},
                                                  {"hyperparameters", req.hyperparameters}});
    json body;
    try {
      body = json::parse(res.body);
    } catch (const json::parse_error&) {
      throw BackendUnavailable("trainer reply is not JSON");
    }
    TrainerAck ack;
    ack.accepted = body.value("accepted", false);
    ack.job_id = body.value("job_id", std::string{});
    ack.message = body.value("message", std::string{});
    return ack;
  }

 private:
  BackendDescriptor d_;
};

}  // namespace

std::unique_ptr<TextModelBackend> make_text_backend(const BackendDescriptor& d, const fs::path& base_dir) {
  if (d.is_mock()) return std::make_unique<MockTextBackend>(d, base_dir);
  return std::make_unique<HttpTextBackend>(d);
}

std::unique_ptr<ImageTextScorer> make_scorer_backend(const BackendDescriptor& d, const fs::path& base_dir) {
  if (d.is_mock()) return std::make_unique<MockScorer>(d, base_dir);
  return std::make_unique<HttpScorer>(d);
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendDescriptor& d, const fs::path& base_dir) {
  if (d.dim <= 0) throw ConfigError("embedding backend " + d.backend_name + " needs a positive dim");
  if (d.is_mock()) return std::make_unique<MockEmbedder>(d, base_dir);
  return std::make_unique<HttpEmbedder>(d);
}

std::unique_ptr<SegmenterBackend> make_segmenter_backend(const BackendDescriptor& d, const fs::path& base_dir) {
  if (d.is_mock()) return std::make_unique<MockSegmenter>(d, base_dir);
  return std::make_unique<HttpSegmenter>(d);
}

std::unique_ptr<TrainerBackend> make_trainer_backend(const BackendDescriptor& d, const fs::path& ledger_path) {
  if (d.is_mock()) return std::make_unique<MockTrainer>(d, ledger_path);
  return std::make_unique<HttpTrainer>(d);
}

}  // namespace wildharvest
