#include "webforge/error.hpp"

namespace webforge {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingRootDocument: return "MissingRootDocument";
    case ErrorKind::MalformedCapture: return "MalformedCapture";
    case ErrorKind::CorruptManifest: return "CorruptManifest";
    case ErrorKind::DigestMismatch: return "DigestMismatch";
    case ErrorKind::InvalidArchive: return "InvalidArchive";
    case ErrorKind::InvalidNodePath: return "InvalidNodePath";
    case ErrorKind::EmptyCaption: return "EmptyCaption";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::BackendRejectedPrompt: return "BackendRejectedPrompt";
    case ErrorKind::MalformedImagePayload: return "MalformedImagePayload";
    case ErrorKind::UndecodableImage: return "UndecodableImage";
    case ErrorKind::PortInUse: return "PortInUse";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::MissingArm: return "MissingArm";
    case ErrorKind::UnannotatedArchive: return "UnannotatedArchive";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::BadDimension: return "BadDimension";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NoValidScores: return "NoValidScores";
    case ErrorKind::UnknownStudy: return "UnknownStudy";
    case ErrorKind::UnknownTask: return "UnknownTask";
    case ErrorKind::DuplicateSubmission: return "DuplicateSubmission";
    case ErrorKind::FormMismatch: return "FormMismatch";
    case ErrorKind::Unauthorized: return "Unauthorized";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace webforge
