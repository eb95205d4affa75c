#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rededit {

enum class ErrorKind {
  // tensor_store
  FileNotFound,
  MalformedHeader,
  UnsupportedDtype,
  IoError,
  InvalidInput,
  MissingMask,
  MissingTensor,
  RoleUnknown,
  DimensionMismatch,
  EmptyConcept,
  NoMatch,
  // edit_solver
  EmptyAfterMasking,
  ZeroPreservationGram,
  SingularSystem,
  NonFinite,
  ShapeMismatch,
  NoConvergence,
  // attribute_pipeline
  Timeout,
  HttpStatus,
  MissingApiKey,
  MalformedResponseBody,
  NoJsonArrayFound,
  EmptyResult,
  ZeroVector,
  MissingEmbedding,
  // verification
  IncompleteReport,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Domain error carrying a machine-readable kind. Every failure the library
/// reports to callers is an Error; anything else escaping is a bug.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, int status = 0)
      : std::runtime_error(message), kind_(kind), status_(status) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// HTTP status for ErrorKind::HttpStatus, 0 otherwise.
  int status() const noexcept { return status_; }

 private:
  ErrorKind kind_;
  int status_;
};

}  // namespace rededit
