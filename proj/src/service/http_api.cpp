#include "bencao/service/http_api.h"

#include <spdlog/spdlog.h>

#include <thread>

#include "bencao/common/text.h"
#include "httplib.h"

namespace bencao::service {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ValidationError:
    case ErrorCode::EmptyAfterCleaning:
    case ErrorCode::LimitInfeasible:
    case ErrorCode::EmptyPool:
    case ErrorCode::ImageUndecodable:
    case ErrorCode::UnknownTool:
    case ErrorCode::SchemaError:
    case ErrorCode::ItemMismatch:
      return 400;
    case ErrorCode::ImageTooLarge:
      return 413;
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownParent:
    case ErrorCode::UnknownFeedback:
    case ErrorCode::UnknownVersion:
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::SessionBusy:
    case ErrorCode::StaleActivation:
    case ErrorCode::DuplicateId:
      return 409;
    case ErrorCode::MalformedStructuredOutput:
      return 502;
    case ErrorCode::GatewayUnavailable:
    case ErrorCode::ToolUnavailable:
    case ErrorCode::StorageUnavailable:
      return 503;
    case ErrorCode::MissingScript:
    case ErrorCode::IoError:
    case ErrorCode::CorruptLog:
      return 500;
  }
  return 500;
}

json api_error(const Error& e) {
  return {{"error", {{"code", error_code_name(e.code())}, {"message", e.what()}, {"retryable", e.retryable()}}}};
}

std::vector<std::string> reply_chunks(const std::string& text, std::size_t n) {
  std::vector<std::string> out;
  n = std::max<std::size_t>(n, 1);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = pos + text::utf8_offset(std::string_view(text).substr(pos), n);
    if (end <= pos) end = text.size();
    out.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) { send_json(res, http_status(e.code()), api_error(e)); }

json body_json(const httplib::Request& req) {
  if (text::trim(req.body).empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) fail(ErrorCode::ValidationError, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ValidationError, std::string("malformed JSON: ") + e.what());
  }
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

std::string sse(const std::string& event, const json& data) {
  return "event: " + event + "\ndata: " + data.dump() + "\n\n";
}

bool wants_stream(const httplib::Request& req) {
  if (req.get_param_value("stream") == "1") return true;
  return req.get_header_value("Accept").find("text/event-stream") != std::string::npos;
}

}  // namespace

struct ApiServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Impl(Service& s) : service(s) {}

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Converts thrown errors into ApiError bodies.
  static httplib::Server::Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const json::exception& e) {
        send_error(res, Error(ErrorCode::ValidationError, e.what()));
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_json(res, 500, {{"error", {{"code", "Internal"}, {"message", e.what()}, {"retryable", false}}}});
      }
    };
  }

  void routes();
  void post_message(const httplib::Request& req, httplib::Response& res);
};

void ApiServer::Impl::routes() {
  server.set_payload_max_length(service.config().max_image_bytes * 2 + (1 << 20));
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send_error(res, Error(ErrorCode::NotFound, "no route for " + req.method + " " + req.path));
    else if (res.status == 413) send_error(res, Error(ErrorCode::ImageTooLarge, "request body too large"));
  });

  server.Get("/healthz", guarded([this](const auto&, auto& res) { send_json(res, 200, service.health()); }));

  server.Post("/v1/sessions", guarded([this](const auto& req, auto& res) {
    auto body = body_json(req);
    std::optional<ScenarioId> hint;
    if (auto h = opt_string(body, "scenario_hint")) {
      hint = parse_scenario(*h);
      if (!hint) fail(ErrorCode::ValidationError, "unknown scenario " + *h);
    }
    send_json(res, 201, to_json(service.create_session(hint), false));
  }));

  server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) {
    send_json(res, 200, to_json(service.get_session(req.matches[1]), true));
  }));

  server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/messages)",
              [this](const httplib::Request& req, httplib::Response& res) { post_message(req, res); });

  server.Post("/v1/feedback", guarded([this](const auto& req, auto& res) {
    auto b = body_json(req);
    auto id = service.record_feedback(b.at("session_id").template get<std::string>(), b.at("turn").template get<int>(),
                                      feedback::polarity_from(b.at("polarity").template get<std::string>()),
                                      b.at("body").template get<std::string>(),
                                      feedback::author_role_from(b.value("author_role", "Practitioner")));
    send_json(res, 201, {{"feedback_id", id}});
  }));

  server.Get("/v1/instructions/versions",
             guarded([this](const auto&, auto& res) { send_json(res, 200, service.instruction_graph()); }));

  server.Post("/v1/instructions/versions", guarded([this](const auto& req, auto& res) {
    auto b = body_json(req);
    auto name = b.at("scenario").template get<std::string>();
    auto scenario = parse_scenario(name);
    if (!scenario) fail(ErrorCode::ValidationError, "unknown scenario " + name);
    auto id = service.publish_instruction(*scenario, b.at("instruction_text").template get<std::string>(),
                                          b.value("changelog", ""),
                                          b.value("linked_feedback", std::vector<std::string>{}),
                                          opt_string(b, "parent"));
    send_json(res, 201, {{"version_id", id}});
  }));

  server.Post(R"(/v1/instructions/versions/([A-Za-z0-9_-]+)/activate)", guarded([this](const auto& req, auto& res) {
    auto b = body_json(req);
    service.activate_instruction(req.matches[1], opt_string(b, "expected_active"));
    send_json(res, 200, service.instruction_graph());
  }));

  server.Post("/v1/eval/runs", guarded([this](const auto& req, auto& res) {
    auto b = body_json(req);
    EvalRequest r;
    r.bench = opt_string(b, "bench");
    if (b.contains("items")) {
      std::string lines;
      for (const auto& item : b["items"]) lines += item.dump() + "\n";
      r.items = eval::parse_benchmark(lines, "request");
    }
    r.model_label = b.value("model_label", r.model_label);
    r.resume = opt_string(b, "resume");
    if (b.contains("parallel")) r.parallel = b["parallel"].template get<int>();
    send_json(res, 202, {{"run_id", service.start_eval(r)}, {"status", "running"}});
  }));

  server.Get(R"(/v1/eval/runs/([A-Za-z0-9_.-]+)/report)", guarded([this](const auto& req, auto& res) {
    auto format = req.has_param("format") ? req.get_param_value("format") : std::string("json");
    if (format != "json" && format != "csv") fail(ErrorCode::ValidationError, "format must be json or csv");
    auto status = service.eval_status(req.matches[1]);
    if (status.status == "failed" && status.error) throw *status.error;
    if (!status.report) {
      send_json(res, 202, {{"run_id", status.run_id}, {"status", status.status}});
      return;
    }
    if (format == "csv") {
      res.status = 200;
      res.set_content(eval::report_csv(*status.report), "text/csv");
    } else {
      send_json(res, 200, eval::to_json(*status.report));
    }
  }));
}

void ApiServer::Impl::post_message(const httplib::Request& req, httplib::Response& res) {
  bool stream = wants_stream(req);
  std::optional<MessageResult> result;
  std::optional<Error> error;
  try {
    std::string text;
    std::optional<std::string> image;
    if (req.is_multipart_form_data()) {
      if (req.has_file("text")) text = req.get_file_value("text").content;
      if (req.has_file("image")) image = req.get_file_value("image").content;
    } else {
      auto b = body_json(req);
      text = b.value("text", "");
      if (auto encoded = opt_string(b, "image_base64")) image = text::base64_decode(*encoded);
    }
    result = service.post_message(req.matches[1], text, image);
  } catch (const Error& e) {
    error = e;
  } catch (const json::exception& e) {
    error = Error(ErrorCode::ValidationError, e.what());
  }

  if (!stream) {
    if (error) send_error(res, *error);
    else send_json(res, 200, to_json(*result));
    return;
  }

  // The step completes before streaming starts; the reply is then sent in
  // small deltas followed by the full result.
  auto events = std::make_shared<std::vector<std::string>>();
  if (error) {
    events->push_back(sse("error", api_error(*error)));
  } else {
    for (auto& chunk : reply_chunks(result->reply.text)) events->push_back(sse("reply_delta", {{"text", chunk}}));
    events->push_back(sse("done", to_json(*result)));
  }
  res.status = 200;
  res.set_header("Cache-Control", "no-cache");
  res.set_chunked_content_provider("text/event-stream", [events, i = std::size_t{0}](std::size_t,
                                                                                       httplib::DataSink& sink) mutable {
    if (i < events->size()) {
      const auto& e = (*events)[i++];
      return sink.write(e.data(), e.size());
    }
    sink.done();
    return true;
  });
}

ApiServer::ApiServer(Service& service) : impl_(std::make_unique<Impl>(service)) { impl_->routes(); }

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
  impl_->port = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (impl_->port < 0) fail(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

bool ApiServer::run(const std::string& host, int port) {
  impl_->port = port;
  spdlog::info("listening on {}:{}", host, port);
  return impl_->server.listen(host, port);
}

void ApiServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int ApiServer::port() const { return impl_->port; }

}  // namespace bencao::service
