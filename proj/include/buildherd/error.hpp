#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace buildherd {

enum class ErrorCode {
  kRepositoryUnreachable,
  kUnknownRevision,
  kEmptyPaths,
  kChangeNotInRun,
  kIndexOutOfRange,
  kDuplicateRunId,
  kStorageIo,
  kInvalidPolicy,
  kInvalidDefinition,
  kInvalidArgument,
  kUnknownProject,
  kParse,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace buildherd
