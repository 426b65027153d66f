#include "buildherd/error.hpp"

namespace buildherd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRepositoryUnreachable: return "repository-unreachable";
    case ErrorCode::kUnknownRevision: return "unknown-revision";
    case ErrorCode::kEmptyPaths: return "empty-paths";
    case ErrorCode::kChangeNotInRun: return "change-not-in-run";
    case ErrorCode::kIndexOutOfRange: return "index-out-of-range";
    case ErrorCode::kDuplicateRunId: return "duplicate-run-id";
    case ErrorCode::kStorageIo: return "storage-io";
    case ErrorCode::kInvalidPolicy: return "invalid-policy";
    case ErrorCode::kInvalidDefinition: return "invalid-definition";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnknownProject: return "unknown-project";
    case ErrorCode::kParse: return "parse-error";
  }
  return "unknown";
}

}  // namespace buildherd
