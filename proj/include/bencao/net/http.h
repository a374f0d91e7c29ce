#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace bencao::net {

struct HttpRequest {
  std::string method = "POST";
  std::string url;  // scheme://host[:port]/path
  std::map<std::string, std::string> headers;
  std::string body;
  std::string content_type = "application/json";
  std::chrono::milliseconds timeout{30000};
};

struct HttpResponse {
  int status = 0;  // 0 when no response was received
  std::string body;
  std::string error;  // transport error description when status == 0
  bool ok() const { return status >= 200 && status < 300; }
};

// A multipart form part for uploads.
struct FormPart {
  std::string name;
  std::string content;
  std::string filename;
  std::string content_type;
};

struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;
  std::string origin() const;
};

// Throws InvalidArgument for anything that is not http(s)://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
  virtual HttpResponse send_multipart(const HttpRequest& request, const std::vector<FormPart>& parts);
};

// Blocking client built on cpp-httplib. One connection per request.
class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse send(const HttpRequest& request) override;
  HttpResponse send_multipart(const HttpRequest& request, const std::vector<FormPart>& parts) override;
};

bool tls_supported();

}  // namespace bencao::net
