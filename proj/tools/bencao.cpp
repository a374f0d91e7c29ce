#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "bencao/common/error.h"
#include "bencao/common/text.h"
#include "bencao/corpus/knowledge_base.h"
#include "bencao/eval/eval.h"
#include "bencao/net/http.h"
#include "bencao/service/http_api.h"
#include "bencao/service/service.h"
#include "httplib.h"

using namespace bencao;
namespace fs = std::filesystem;

namespace {

service::ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

// ---------------------------------------------------------------- serve

int serve(const std::string& config_path, std::optional<int> port) {
  auto cfg = service::ServiceConfig::load(config_path);
  if (port) cfg.port = *port;
  service::Service svc(cfg);
  service::ApiServer api(svc);
  g_server = &api;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  auto health = svc.health();
  spdlog::info("gateway: {}, storage: {}", health["gateway"].get<std::string>(), cfg.storage_dir.string());
  bool ok = api.run(cfg.host, cfg.port);
  g_server = nullptr;
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------- chat

struct ChatClient {
  httplib::Client http;
  std::size_t max_image_bytes;

  ChatClient(const net::ParsedUrl& url, std::size_t cap) : http(url.origin()), max_image_bytes(cap) {
    http.set_read_timeout(120, 0);
  }

  json check(const httplib::Result& r) {
    if (!r) fail(ErrorCode::GatewayUnavailable, "service unreachable: " + httplib::to_string(r.error()));
    auto body = r->body.empty() ? json::object() : json::parse(r->body);
    if (r->status >= 400) {
      auto code = body["error"].value("code", "Error");
      fail(ErrorCode::InvalidArgument, code + ": " + body["error"].value("message", ""));
    }
    return body;
  }

  std::string create(const std::optional<std::string>& hint) {
    json body = json::object();
    if (hint) body["scenario_hint"] = *hint;
    return check(http.Post("/v1/sessions", body.dump(), "application/json"))["session_id"];
  }

  json send(const std::string& id, const std::string& text, const std::optional<fs::path>& image) {
    auto path = "/v1/sessions/" + id + "/messages";
    if (!image) return check(http.Post(path, json{{"text", text}}.dump(), "application/json"));
    auto bytes = read_file(*image);
    // Rejected here so an oversized upload never leaves the terminal.
    if (bytes.size() > max_image_bytes)
      fail(ErrorCode::ImageTooLarge, image->string() + " is " + std::to_string(bytes.size()) + " bytes; the cap is " +
                                         std::to_string(max_image_bytes));
    tools::sniff_image(bytes);
    httplib::MultipartFormDataItems form = {{"text", text, "", ""},
                                            {"image", bytes, image->filename().string(), ""}};
    return check(http.Post(path, form));
  }
};

void print_result(const json& r) {
  std::cout << "\n" << r["reply"]["text"].get<std::string>() << "\n";
  const auto& st = r["state"];
  std::cout << "-- scenario " << (st["scenario"].is_null() ? "pending" : st["scenario"].get<std::string>()) << ", stage "
            << st["stage"].get<std::string>() << ", mode " << st["mode"].get<std::string>() << ", coverage "
            << st["coverage"]["fraction"].get<std::string>() << "\n\n";
}

int chat(const std::string& url, std::optional<std::string> session, const std::optional<std::string>& hint,
         std::size_t cap) {
  ChatClient client(net::parse_url(url), cap);
  if (!session) {
    session = client.create(hint);
    std::cout << "session " << *session << "\n";
  }
  std::cout << "Type a message. \"/image <path> <text>\" attaches a photo, \"/quit\" exits.\n";
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    line = text::trim(line);
    if (line.empty()) continue;
    if (line == "/quit") break;
    std::optional<fs::path> image;
    if (text::starts_with(line, "/image ")) {
      auto rest = line.substr(7);
      auto space = rest.find(' ');
      image = rest.substr(0, space);
      line = space == std::string::npos ? "" : text::trim(rest.substr(space + 1));
    }
    try {
      print_result(client.send(*session, line, image));
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------- ingest

int ingest(const fs::path& manifest, const fs::path& out, std::optional<std::size_t> max, const fs::path& patterns) {
  std::vector<corpus::StripPattern> defaults;
  if (fs::exists(patterns)) defaults = corpus::strip_patterns_from_json(read_json_file(patterns));
  auto s = corpus::run_ingest(manifest, out, max, defaults);
  std::cout << json{{"documents", s.documents},
                    {"attachments", s.attachments},
                    {"registry", s.registry_path.string()},
                    {"index", s.index_path.string()}}
                   .dump(2)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalRunArgs {
  std::string bench;
  std::string model;
  std::string out;
  std::optional<std::string> resume;
  int parallel = 1;
  std::optional<std::string> config;
  std::optional<std::string> script;
  std::optional<std::string> prompt;
};

int eval_run(const EvalRunArgs& a) {
  service::ServiceConfig cfg;
  if (a.config) cfg = service::ServiceConfig::load(*a.config);
  if (a.script) cfg.scripted_provider = fs::path(*a.script);
  auto gateway = service::make_gateway(cfg, nullptr);
  if (!gateway) fail(ErrorCode::GatewayUnavailable, "eval run needs --config with a provider block or --script");

  auto items = eval::load_benchmark(a.bench);
  eval::RunOptions opts;
  opts.model_label = a.model;
  if (a.prompt) opts.prompt = eval::PromptTemplate::load(*a.prompt);
  opts.out_dir = a.out;
  opts.resume = a.resume;
  opts.parallel = a.parallel;
  if (!a.resume) opts.run_id = "run-" + fnv1a64_hex(SystemClock().now_iso8601() + a.model).substr(0, 10);
  auto run_id = a.resume ? *a.resume : *opts.run_id;
  fs::create_directories(fs::path(a.out) / run_id);
  auto items_copy = fs::path(a.out) / run_id / "items.jsonl";
  if (!fs::exists(items_copy)) fs::copy_file(a.bench, items_copy);
  std::cerr << "run " << run_id << " (" << items.size() << " items)\n";

  auto run = eval::run_eval(items, *gateway, opts);
  auto report = eval::score(run, items);
  eval::emit_report(report, eval::ReportFormat::Json, fs::path(a.out) / run_id / "report.json");
  std::cout << eval::to_json(report).dump(2) << "\n";
  return 0;
}

int eval_score(const fs::path& dir, const std::optional<std::string>& bench, const std::string& format,
               const std::optional<std::string>& out, const std::optional<std::string>& reference) {
  auto run = eval::load_run(dir);
  auto items = eval::load_benchmark(bench ? fs::path(*bench) : dir / "items.jsonl");
  auto report = eval::score(run, items);
  if (reference) {
    auto c = eval::Comparison::load(*reference);
    c.add(report);
    std::cout << c.render_table();
    return 0;
  }
  auto f = eval::parse_format(format);
  if (!f) fail(ErrorCode::InvalidArgument, "unknown format " + format);
  if (out) {
    eval::emit_report(report, *f, *out);
    return 0;
  }
  switch (*f) {
    case eval::ReportFormat::Csv: std::cout << eval::report_csv(report); break;
    case eval::ReportFormat::Json: std::cout << eval::to_json(report).dump(2) << "\n"; break;
    case eval::ReportFormat::PlotData: std::cout << eval::category_plot({report}).dump(2) << "\n"; break;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bencao: consultation engine service and tools"};
  app.require_subcommand(1);

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string config_path;
  std::optional<int> port;
  serve_cmd->add_option("--config", config_path, "Service config (JSON)")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", port, "Listen port (overrides the config)");

  auto* chat_cmd = app.add_subcommand("chat", "Terminal client for a running service");
  std::string url = "http://127.0.0.1:8080";
  std::optional<std::string> session, hint;
  std::size_t cap = tools::kDefaultImageCap;
  chat_cmd->add_option("--url", url, "Service base URL");
  chat_cmd->add_option("--session", session, "Continue an existing session (default: create one)");
  chat_cmd->add_option("--hint", hint, "Scenario hint for a new session");
  chat_cmd->add_option("--max-image-bytes", cap, "Client-side upload cap");

  auto* ingest_cmd = app.add_subcommand("ingest", "Build the knowledge base from a manifest");
  std::string manifest, out_dir, patterns = "data/corpus/strip_patterns.json";
  std::optional<std::size_t> max_attachments;
  ingest_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", out_dir)->required();
  ingest_cmd->add_option("--max-attachments", max_attachments);
  ingest_cmd->add_option("--strip-patterns", patterns, "Default strip patterns (JSON)");

  auto* eval_cmd = app.add_subcommand("eval", "Benchmark runs and scoring");
  eval_cmd->require_subcommand(1);
  auto* run_cmd = eval_cmd->add_subcommand("run", "Run a benchmark against the configured model");
  EvalRunArgs ra;
  run_cmd->add_option("--bench", ra.bench)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--model", ra.model, "Label recorded in the report")->required();
  run_cmd->add_option("--out", ra.out)->required();
  run_cmd->add_option("--resume", ra.resume, "Run id to continue");
  run_cmd->add_option("--parallel", ra.parallel)->check(CLI::PositiveNumber);
  run_cmd->add_option("--config", ra.config, "Service config with a provider block")->check(CLI::ExistingFile);
  run_cmd->add_option("--script", ra.script, "Scripted provider file")->check(CLI::ExistingFile);
  run_cmd->add_option("--prompt", ra.prompt, "Prompt template (JSON)")->check(CLI::ExistingFile);

  auto* score_cmd = eval_cmd->add_subcommand("score", "Score a finished run");
  std::string run_dir, format = "json";
  std::optional<std::string> bench, report_out, reference;
  score_cmd->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  score_cmd->add_option("--bench", bench, "Items file (default: <run>/items.jsonl)");
  score_cmd->add_option("--format", format, "json | csv | plot");
  score_cmd->add_option("--out", report_out);
  score_cmd->add_option("--reference", reference, "Reference figures; prints a comparison table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return serve(config_path, port);
    if (*chat_cmd) return chat(url, session, hint, cap);
    if (*ingest_cmd) return ingest(manifest, out_dir, max_attachments, patterns);
    if (*run_cmd) return eval_run(ra);
    if (*score_cmd) return eval_score(run_dir, bench, format, report_out, reference);
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return e.retryable() ? 75 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
