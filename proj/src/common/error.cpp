#include "bencao/common/error.h"

namespace bencao {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case ErrorCode::LimitInfeasible: return "LimitInfeasible";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::GatewayUnavailable: return "GatewayUnavailable";
    case ErrorCode::MalformedStructuredOutput: return "MalformedStructuredOutput";
    case ErrorCode::MissingScript: return "MissingScript";
    case ErrorCode::ImageTooLarge: return "ImageTooLarge";
    case ErrorCode::ImageUndecodable: return "ImageUndecodable";
    case ErrorCode::ToolUnavailable: return "ToolUnavailable";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::UnknownParent: return "UnknownParent";
    case ErrorCode::UnknownFeedback: return "UnknownFeedback";
    case ErrorCode::UnknownVersion: return "UnknownVersion";
    case ErrorCode::StaleActivation: return "StaleActivation";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ItemMismatch: return "ItemMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::StorageUnavailable: return "StorageUnavailable";
    case ErrorCode::SessionBusy: return "SessionBusy";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

bool is_retryable(ErrorCode code) {
  switch (code) {
    case ErrorCode::GatewayUnavailable:
    case ErrorCode::ToolUnavailable:
    case ErrorCode::StorageUnavailable:
    case ErrorCode::SessionBusy:
    case ErrorCode::StaleActivation:
      return true;
    default:
      return false;
  }
}

}  // namespace bencao
