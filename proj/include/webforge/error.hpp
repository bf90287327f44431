#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace webforge {

enum class ErrorKind {
  // archive
  MissingRootDocument,
  MalformedCapture,
  CorruptManifest,
  DigestMismatch,
  InvalidArchive,
  // annotate
  InvalidNodePath,
  EmptyCaption,
  // genclient
  InvalidArgument,
  BackendUnavailable,
  BackendRejectedPrompt,
  MalformedImagePayload,
  UndecodableImage,
  // proxy
  PortInUse,
  // metrics
  SchemaViolation,
  MissingArm,
  UnannotatedArchive,
  // evaluate
  DimensionMismatch,
  ZeroVector,
  ProviderUnavailable,
  BadDimension,
  EmptyInput,
  NoValidScores,
  // study
  UnknownStudy,
  UnknownTask,
  DuplicateSubmission,
  FormMismatch,
  Unauthorized,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace webforge
