#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wildharvest {

/// Coarse failure class. The CLI maps each class onto a process exit code.
enum class ErrorKind {
  validation,          // exit 2
  backend_unavailable, // exit 3
  data_integrity,      // exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

int exit_code_for(ErrorKind kind) noexcept;

#define WILDHARVEST_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
  };

// domain-model
WILDHARVEST_DEFINE_ERROR(EmptyContent, validation)
WILDHARVEST_DEFINE_ERROR(InvariantError, validation)
WILDHARVEST_DEFINE_ERROR(ConfigError, validation)
WILDHARVEST_DEFINE_ERROR(StoreError, data_integrity)

// ingestion
WILDHARVEST_DEFINE_ERROR(SourceUnavailable, backend_unavailable)
WILDHARVEST_DEFINE_ERROR(AdapterPayloadError, validation)
WILDHARVEST_DEFINE_ERROR(EmptyCandidateSet, validation)
WILDHARVEST_DEFINE_ERROR(FetchError, backend_unavailable)
WILDHARVEST_DEFINE_ERROR(ImageRejected, validation)

// extraction / backends
WILDHARVEST_DEFINE_ERROR(ExtractionSchemaError, validation)
WILDHARVEST_DEFINE_ERROR(BackendUnavailable, backend_unavailable)

// retrieval
WILDHARVEST_DEFINE_ERROR(EmbeddingInputError, validation)
WILDHARVEST_DEFINE_ERROR(ZeroVectorError, validation)
WILDHARVEST_DEFINE_ERROR(DimensionError, validation)

// pairing
WILDHARVEST_DEFINE_ERROR(EmptyPoolError, validation)
WILDHARVEST_DEFINE_ERROR(PairExhaustionError, data_integrity)

// scheduler
WILDHARVEST_DEFINE_ERROR(LabelConflictError, data_integrity)
WILDHARVEST_DEFINE_ERROR(LeakageError, data_integrity)
WILDHARVEST_DEFINE_ERROR(RegistryError, validation)
WILDHARVEST_DEFINE_ERROR(JobRejected, backend_unavailable)
WILDHARVEST_DEFINE_ERROR(TimelineError, validation)

// evaluation
WILDHARVEST_DEFINE_ERROR(SingleClassError, validation)
WILDHARVEST_DEFINE_ERROR(MissingCellError, validation)

// pipeline
WILDHARVEST_DEFINE_ERROR(MissingInputError, validation)
WILDHARVEST_DEFINE_ERROR(StaleCacheError, validation)
WILDHARVEST_DEFINE_ERROR(LockError, validation)

#undef WILDHARVEST_DEFINE_ERROR

/// Raised when a manifest, score file or other line-oriented record fails to parse.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t offset = 0);
  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

/// Errors that name the offending ids (undated entries, unannotated samples).
class IdListError : public Error {
 public:
  IdListError(ErrorKind kind, const std::string& prefix, std::vector<std::string> ids);
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class UndatedEntryError : public IdListError {
 public:
  explicit UndatedEntryError(std::vector<std::string> ids)
      : IdListError(ErrorKind::validation, "undated entries", std::move(ids)) {}
};

class IncompleteAnnotationError : public IdListError {
 public:
  explicit IncompleteAnnotationError(std::vector<std::string> ids)
      : IdListError(ErrorKind::validation, "missing annotations for sampled ids", std::move(ids)) {}
};

}  // namespace wildharvest
