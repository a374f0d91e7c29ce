#pragma once

#include <memory>
#include <string>

#include "bencao/common/error.h"
#include "bencao/service/service.h"

namespace bencao::service {

// HTTP status for an error code.
int http_status(ErrorCode code);
// {"error": {"code", "message", "retryable"}}
json api_error(const Error& e);

// Splits a reply into SSE reply_delta chunks without breaking UTF-8 sequences.
std::vector<std::string> reply_chunks(const std::string& text, std::size_t codepoints_per_chunk = 24);

// JSON API over cpp-httplib:
//   POST /v1/sessions                              -> 201 session summary
//   GET  /v1/sessions/{id}                         -> summary with transcript
//   POST /v1/sessions/{id}/messages                JSON or multipart; SSE with Accept: text/event-stream
//   POST /v1/feedback                              -> 201 {feedback_id}
//   GET  /v1/instructions/versions                 -> version graph
//   POST /v1/instructions/versions                 -> 201 {version_id}
//   POST /v1/instructions/versions/{id}/activate   -> 200 graph
//   POST /v1/eval/runs                             -> 202 {run_id}
//   GET  /v1/eval/runs/{id}/report?format=json|csv -> 200, or 202 while running
//   GET  /healthz
class ApiServer {
 public:
  explicit ApiServer(Service& service);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  bool run(const std::string& host, int port);
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bencao::service
