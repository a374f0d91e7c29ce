#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bencao {

// Closed set of machine-readable failure codes shared by every module.
// The service maps these one-to-one onto ApiError.code.
enum class ErrorCode {
  InvalidArgument,
  ValidationError,
  // corpus
  EmptyAfterCleaning,
  LimitInfeasible,
  DuplicateId,
  // consult
  EmptyPool,
  // gateway
  GatewayUnavailable,
  MalformedStructuredOutput,
  MissingScript,
  // tools
  ImageTooLarge,
  ImageUndecodable,
  ToolUnavailable,
  UnknownTool,
  // feedback
  UnknownSession,
  UnknownParent,
  UnknownFeedback,
  UnknownVersion,
  StaleActivation,
  // evalharness
  SchemaError,
  ItemMismatch,
  IoError,
  // service
  StorageUnavailable,
  SessionBusy,
  CorruptLog,
  NotFound,
};

std::string_view error_code_name(ErrorCode code);
bool is_retryable(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept { return is_retryable(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bencao
