#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wildharvest/hash.hpp"
#include "wildharvest/image_probe.hpp"
#include "wildharvest/jsonl.hpp"
#include "wildharvest/types.hpp"

namespace wildharvest {

// Model backends. Every backend is either an HTTP service (endpoint http[s]://...)
// or an in-repo mock (endpoint "mock:" or "mock:<fixture file>").

struct BackendDescriptor {
  std::string backend_name;
  std::string endpoint;
  std::string model_id;
  std::string model_version = "1";
  /// Text backends only; pinned to 0.
  double temperature = 0.0;
  /// Embedding backends only.
  int dim = 0;
  /// Segmenter backends only.
  std::vector<std::string> query_vocabulary = {"photo", "image", "picture"};
  std::size_t concurrency = 4;

  bool is_mock() const { return endpoint.rfind("mock:", 0) == 0; }
  /// Text after "mock:".
  std::string mock_spec() const { return is_mock() ? endpoint.substr(5) : std::string{}; }
};

BackendDescriptor backend_from_json(const std::string& name, const json& j);
json to_json(const BackendDescriptor& d);

struct ImageRef {
  std::string image_id;
  std::span<const std::uint8_t> bytes;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

// --- LLM extraction -------------------------------------------------------

struct TextRequest {
  std::string article_id;
  std::string prompt;
  std::string input;
};

class TextModelBackend {
 public:
  virtual ~TextModelBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  /// Raw structured response. Throws BackendUnavailable when unreachable and
  /// ExtractionSchemaError when the reply is not JSON at all.
  virtual json complete(const TextRequest& req) = 0;
};

// --- VLM image-caption scoring -------------------------------------------

class ImageTextScorer {
 public:
  virtual ~ImageTextScorer() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  /// Alignment in [0,1]; backends answer on a 0-100 scale which is normalized and clamped here.
  virtual double score(const ImageRef& image, const std::string& caption, const std::string& prompt) = 0;
};

/// Maps a 0-100 elicited score onto [0,1] with clamping.
double normalize_elicited_score(double raw);

// --- Image embeddings ------------------------------------------------------

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  int dim() const { return descriptor().dim; }
  virtual std::vector<double> embed(const ImageRef& image) = 0;
};

/// The mock embedder's published formula: the first `dim` bytes of the image's
/// content hash (extended by re-hashing when dim > 32), each mapped b -> b/127.5 - 1.
std::vector<double> mock_embedding(const std::string& image_id, int dim);

// --- Segmentation ------------------------------------------------------------

struct ScoredBox {
  BoundingBox box;
  double confidence = 0.0;
};

class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual std::vector<ScoredBox> segment(const ImageRef& image, const ImageInfo& info,
                                         const std::vector<std::string>& queries) = 0;
};

// --- Detector trainer ---------------------------------------------------------

struct TrainerRequest {
  int round = 0;
  std::string manifest_id;
  std::string manifest_hash;
  json hyperparameters = json::object();
};

struct TrainerAck {
  std::string job_id;
  bool accepted = false;
  std::string message;
};

class TrainerBackend {
 public:
  virtual ~TrainerBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual TrainerAck submit(const TrainerRequest& req) = 0;
};

// Factories. Mock fixture paths resolve against `base_dir`.
std::unique_ptr<TextModelBackend> make_text_backend(const BackendDescriptor& d, const std::filesystem::path& base_dir = {});
std::unique_ptr<ImageTextScorer> make_scorer_backend(const BackendDescriptor& d, const std::filesystem::path& base_dir = {});
/// Throws ConfigError for a non-positive dimension.
std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendDescriptor& d, const std::filesystem::path& base_dir = {});
std::unique_ptr<SegmenterBackend> make_segmenter_backend(const BackendDescriptor& d, const std::filesystem::path& base_dir = {});
/// The mock trainer appends every call to `ledger_path`; "mock:reject" refuses every job.
std::unique_ptr<TrainerBackend> make_trainer_backend(const BackendDescriptor& d, const std::filesystem::path& ledger_path);

}  // namespace wildharvest
