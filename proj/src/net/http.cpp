#include "bencao/net/http.h"

#include <regex>

#include "bencao/common/error.h"
#include "httplib.h"

namespace bencao::net {

std::string ParsedUrl::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) fail(ErrorCode::InvalidArgument, "bad URL: " + url);
  ParsedUrl u;
  u.scheme = m[1];
  u.host = m[2];
  u.port = m[3].matched ? std::stoi(m[3]) : (u.scheme == "https" ? 443 : 80);
  u.path = m[4].matched ? std::string(m[4]) : "/";
  return u;
}

bool tls_supported() {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
  return true;
#else
  return false;
#endif
}

HttpResponse HttpTransport::send_multipart(const HttpRequest&, const std::vector<FormPart>&) {
  HttpResponse r;
  r.error = "multipart not supported by this transport";
  return r;
}

namespace {

template <typename Fn>
HttpResponse with_client(const HttpRequest& request, Fn&& fn) {
  HttpResponse out;
  ParsedUrl u;
  try {
    u = parse_url(request.url);
  } catch (const Error& e) {
    out.error = e.what();
    return out;
  }
  if (u.scheme == "https" && !tls_supported()) {
    out.error = "https requested but TLS support is not compiled in";
    return out;
  }
  httplib::Client client(u.origin());
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers(request.headers.begin(), request.headers.end());
  httplib::Result res = fn(client, u.path, headers);
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace

HttpResponse HttplibTransport::send(const HttpRequest& request) {
  return with_client(request, [&](httplib::Client& c, const std::string& path, const httplib::Headers& h) {
    if (request.method == "GET") return c.Get(path, h);
    if (request.method == "DELETE") return c.Delete(path, h, request.body, request.content_type);
    if (request.method == "PUT") return c.Put(path, h, request.body, request.content_type);
    return c.Post(path, h, request.body, request.content_type);
  });
}

HttpResponse HttplibTransport::send_multipart(const HttpRequest& request, const std::vector<FormPart>& parts) {
  httplib::MultipartFormDataItems items;
  for (const auto& p : parts) items.push_back({p.name, p.content, p.filename, p.content_type});
  return with_client(request, [&](httplib::Client& c, const std::string& path, const httplib::Headers& h) {
    return c.Post(path, h, items);
  });
}

}  // namespace bencao::net
