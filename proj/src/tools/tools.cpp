#include "bencao/tools/tools.h"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "bencao/common/text.h"
#include "bencao/tools/schema.h"

namespace bencao::tools {

json to_json(const TongueAnalysis& t) {
  return json{{"tongue_color", t.tongue_color},
              {"coating", t.coating},
              {"shape", t.shape},
              {"moisture", t.moisture},
              {"raw_scores", t.raw_scores}};
}

TongueAnalysis tongue_from_json(const json& j) {
  TongueAnalysis t;
  t.tongue_color = j.at("tongue_color").get<std::string>();
  t.coating = j.at("coating").get<std::string>();
  t.shape = j.at("shape").get<std::string>();
  t.moisture = j.at("moisture").get<std::string>();
  t.raw_scores = j.value("raw_scores", std::map<std::string, double>{});
  return t;
}

namespace {
const std::set<std::string> kFeatures = {"color", "coating", "shape", "moisture"};
}

TongueLabelMap TongueLabelMap::from_json(const json& j) {
  TongueLabelMap m;
  try {
    m.version = j.value("version", std::string{});
    m.labels = j.at("labels").get<std::map<std::string, std::map<std::string, std::string>>>();
    for (const auto& r : j.at("ledger_mapping")) {
      LedgerMappingRule rule;
      rule.feature = r.at("feature").get<std::string>();
      rule.label = r.at("label").get<std::string>();
      auto e = parse_element(r.at("element").get<std::string>());
      if (!e) fail(ErrorCode::SchemaError, "tongue mapping names unknown element " + r.at("element").dump());
      rule.element = *e;
      rule.finding = r.at("finding").get<std::string>();
      if (!kFeatures.count(rule.feature)) fail(ErrorCode::SchemaError, "unknown tongue feature " + rule.feature);
      m.ledger_mapping.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("tongue label map: ") + e.what());
  }
  return m;
}

TongueLabelMap TongueLabelMap::load(const std::string& path) { return from_json(read_json_file(path)); }

std::string TongueLabelMap::canonical(const std::string& feature, const std::string& native) const {
  auto f = labels.find(feature);
  if (f == labels.end()) return native;
  auto it = f->second.find(native);
  return it == f->second.end() ? native : it->second;
}

std::vector<Finding> tongue_findings(const TongueAnalysis& a, const TongueLabelMap& map) {
  std::vector<Finding> out;
  std::set<DiagnosticElement> seen;
  for (const auto& rule : map.ledger_mapping) {
    const std::string* value = nullptr;
    if (rule.feature == "color") value = &a.tongue_color;
    else if (rule.feature == "coating") value = &a.coating;
    else if (rule.feature == "shape") value = &a.shape;
    else if (rule.feature == "moisture") value = &a.moisture;
    if (!value || *value != rule.label || seen.count(rule.element)) continue;
    seen.insert(rule.element);
    out.push_back({rule.element, "tongue: " + rule.finding, 1.0});
  }
  return out;
}

ImageFormat sniff_image(std::string_view b) {
  auto starts = [&](std::string_view magic) { return b.size() >= magic.size() && b.substr(0, magic.size()) == magic; };
  if (starts("\xFF\xD8\xFF")) return ImageFormat::Jpeg;
  if (starts("\x89PNG\r\n\x1A\n")) return ImageFormat::Png;
  if (starts("GIF87a") || starts("GIF89a")) return ImageFormat::Gif;
  if (b.size() >= 12 && starts("RIFF") && b.substr(8, 4) == "WEBP") return ImageFormat::Webp;
  if (starts("BM") && b.size() > 26) return ImageFormat::Bmp;
  fail(ErrorCode::ImageUndecodable, b.empty() ? "empty image payload" : "unrecognized image format");
}

std::string_view mime_type(ImageFormat f) {
  switch (f) {
    case ImageFormat::Jpeg: return "image/jpeg";
    case ImageFormat::Png: return "image/png";
    case ImageFormat::Gif: return "image/gif";
    case ImageFormat::Webp: return "image/webp";
    case ImageFormat::Bmp: return "image/bmp";
  }
  return "application/octet-stream";
}

namespace {

// Posts `body` with retries on transport failures and 5xx responses.
net::HttpResponse post_with_retries(net::HttpTransport& transport, const ToolEndpointConfig& cfg,
                                    const std::string& body, const std::string& tool) {
  net::HttpRequest req;
  req.url = cfg.endpoint;
  req.body = body;
  req.timeout = cfg.timeout;
  net::HttpResponse res;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    res = transport.send(req);
    if (res.status != 0 && res.status < 500) return res;
    spdlog::debug("{} attempt {} failed: {}", tool, attempt + 1, res.status ? std::to_string(res.status) : res.error);
  }
  fail(ErrorCode::ToolUnavailable,
       tool + " unavailable after " + std::to_string(cfg.max_retries + 1) + " attempts: " +
           (res.status ? "HTTP " + std::to_string(res.status) : res.error));
}

}  // namespace

TongueClient::TongueClient(TongueClientConfig config, TongueLabelMap labels,
                           std::shared_ptr<net::HttpTransport> transport)
    : config_(std::move(config)), labels_(std::move(labels)), transport_(std::move(transport)) {
  if (config_.max_retries < 0) fail(ErrorCode::InvalidArgument, "tool retries must be >= 0");
}

ImageFormat TongueClient::validate(std::string_view image) const {
  if (image.empty()) fail(ErrorCode::ImageUndecodable, "empty image payload");
  if (image.size() > config_.max_image_bytes) {
    fail(ErrorCode::ImageTooLarge, "image is " + std::to_string(image.size()) + " bytes, cap is " +
                                       std::to_string(config_.max_image_bytes));
  }
  return sniff_image(image);
}

TongueAnalysis TongueClient::classify(std::string_view image) const {
  auto format = validate(image);
  if (config_.endpoint.empty() || !transport_) fail(ErrorCode::ToolUnavailable, "tongue classifier not configured");
  json body = {{"image_base64", text::base64_encode(image)}, {"mime", mime_type(format)}};
  auto res = post_with_retries(*transport_, config_, body.dump(), "tongue classifier");
  if (res.status == 413) fail(ErrorCode::ImageTooLarge, "classifier rejected the image size");
  if (res.status == 415 || res.status == 422) fail(ErrorCode::ImageUndecodable, "classifier could not decode image");
  if (!res.ok()) fail(ErrorCode::ToolUnavailable, "tongue classifier returned HTTP " + std::to_string(res.status));

  TongueAnalysis a;
  try {
    auto j = json::parse(res.body);
    const json& labels = j.contains("labels") ? j.at("labels") : j;
    a.tongue_color = labels_.canonical("color", labels.at("color").get<std::string>());
    a.coating = labels_.canonical("coating", labels.at("coating").get<std::string>());
    a.shape = labels_.canonical("shape", labels.at("shape").get<std::string>());
    a.moisture = labels_.canonical("moisture", labels.at("moisture").get<std::string>());
    if (j.contains("scores")) {
      for (const auto& [k, v] : j.at("scores").items()) a.raw_scores[k] = v.get<double>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ToolUnavailable, std::string("malformed classifier response: ") + e.what());
  }
  if (a.tongue_color.empty() || a.coating.empty() || a.shape.empty() || a.moisture.empty()) {
    fail(ErrorCode::ToolUnavailable, "classifier response lacks a label");
  }
  for (const auto& [k, v] : a.raw_scores) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::ToolUnavailable, "classifier score out of range for " + k);
  }
  return a;
}

json to_json(const KnowledgeQueryResult& r) {
  json arr = json::array();
  for (const auto& e : r.entries) {
    arr.push_back({{"id", e.id},
                   {"modality", e.modality},
                   {"content", e.content},
                   {"asset_ref", e.asset_ref},
                   {"score", e.score},
                   {"source", e.source}});
  }
  return json{{"entries", arr}};
}

std::vector<KnowledgeEntry> merge_entries(const std::vector<KnowledgeEntry>& local,
                                          const std::vector<KnowledgeEntry>& remote) {
  std::vector<KnowledgeEntry> out = local;
  out.insert(out.end(), remote.begin(), remote.end());
  std::size_t n_local = local.size();
  std::vector<std::size_t> idx(out.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (out[a].score != out[b].score) return out[a].score > out[b].score;
    return (a < n_local) && !(b < n_local);
  });
  std::vector<KnowledgeEntry> sorted;
  sorted.reserve(out.size());
  for (auto i : idx) sorted.push_back(out[i]);
  return sorted;
}

std::vector<KnowledgeEntry> local_entries(const std::vector<corpus::RetrievalHit>& hits,
                                          const std::function<std::string(const std::string&)>& title_of) {
  std::vector<KnowledgeEntry> out;
  for (const auto& h : hits) {
    out.push_back({h.doc_id + "#" + std::to_string(h.span.begin) + "-" + std::to_string(h.span.end), "text",
                   h.snippet, "", h.score, "local:" + title_of(h.doc_id)});
  }
  return out;
}

KnowledgeDbClient::KnowledgeDbClient(ToolEndpointConfig config, std::shared_ptr<net::HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::vector<KnowledgeEntry> KnowledgeDbClient::query_remote(const std::string& query, const std::string& modality,
                                                            std::size_t top_k) const {
  if (config_.endpoint.empty() || !transport_) fail(ErrorCode::ToolUnavailable, "knowledge database not configured");
  json body = {{"query", query}, {"modality", modality}, {"top_k", top_k}};
  auto res = post_with_retries(*transport_, config_, body.dump(), "knowledge database");
  if (!res.ok()) fail(ErrorCode::ToolUnavailable, "knowledge database returned HTTP " + std::to_string(res.status));
  std::vector<KnowledgeEntry> out;
  try {
    auto j = json::parse(res.body);
    for (const auto& e : j.value("entries", json::array())) {
      KnowledgeEntry k;
      k.id = e.at("id").get<std::string>();
      k.modality = e.value("modality", std::string("text"));
      k.content = e.value("content", std::string{});
      k.asset_ref = e.value("asset_ref", std::string{});
      k.score = e.value("score", 0.0);
      k.source = "remote";
      if (modality != "any" && k.modality != modality) continue;
      out.push_back(std::move(k));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ToolUnavailable, std::string("malformed knowledge database response: ") + e.what());
  }
  return out;
}

KnowledgeQueryResult KnowledgeDbClient::query(const std::string& query, const std::string& modality,
                                              const std::vector<KnowledgeEntry>& local, std::size_t top_k) const {
  if (text::trim(query).empty()) fail(ErrorCode::InvalidArgument, "query must be non-empty");
  std::vector<KnowledgeEntry> filtered;
  for (const auto& e : local) {
    if (modality == "any" || e.modality == modality) filtered.push_back(e);
  }
  KnowledgeQueryResult r;
  r.entries = merge_entries(filtered, query_remote(query, modality, top_k));
  if (r.entries.size() > top_k) r.entries.resize(top_k);
  return r;
}

ToolSpec ToolSpec::from_json(const json& j) {
  ToolSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.description = j.value("description", std::string{});
    s.arguments = j.at("arguments");
    s.result = j.value("result", json::object());
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("tool schema: ") + e.what());
  }
  return s;
}

ToolSpec ToolSpec::load(const std::string& path) { return from_json(read_json_file(path)); }

json to_json(const ToolResult& r) {
  json j = {{"call_id", r.call_id}, {"name", r.name}, {"ok", r.ok()}};
  if (r.payload) j["payload"] = *r.payload;
  if (r.error) j["error"] = {{"code", error_code_name(r.error->code)}, {"message", r.error->message}};
  return j;
}

void ToolRegistry::add(ToolSpec spec, Handler handler) {
  auto name = spec.name;
  tools_[name] = {std::move(spec), std::move(handler)};
}

std::vector<ToolSpec> ToolRegistry::specs() const {
  std::vector<ToolSpec> out;
  for (const auto& [_, e] : tools_) out.push_back(e.spec);
  return out;
}

ToolResult ToolRegistry::dispatch(const ToolInvocation& call) const {
  auto it = tools_.find(call.name);
  if (it == tools_.end()) fail(ErrorCode::UnknownTool, "unknown tool: " + call.name);
  ToolResult r{call.id, call.name, std::nullopt, std::nullopt};
  auto problems = validate_schema(call.arguments, it->second.spec.arguments);
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    r.error = ToolError{ErrorCode::ValidationError, msg};
    return r;
  }
  try {
    r.payload = it->second.handler(call.arguments);
  } catch (const Error& e) {
    r.error = ToolError{e.code(), e.what()};
  } catch (const std::exception& e) {
    r.error = ToolError{ErrorCode::ToolUnavailable, e.what()};
  }
  return r;
}

ToolRegistry make_registry(const std::string& schema_dir, const ToolSuite& suite, ImageResolver images,
                           std::function<std::vector<KnowledgeEntry>(const std::string&)> local_search) {
  ToolRegistry reg;
  auto tongue = suite.tongue;
  reg.add(ToolSpec::load(schema_dir + "/classify_tongue.json"), [tongue, images](const json& args) {
    if (!tongue) fail(ErrorCode::ToolUnavailable, "tongue classifier not configured");
    auto ref = args.at("image_ref").get<std::string>();
    auto bytes = images ? images(ref) : std::nullopt;
    if (!bytes) fail(ErrorCode::NotFound, "no uploaded image " + ref);
    return to_json(tongue->classify(*bytes));
  });
  auto kdb = suite.kdb;
  reg.add(ToolSpec::load(schema_dir + "/query_knowledge_db.json"), [kdb, local_search](const json& args) {
    if (!kdb) fail(ErrorCode::ToolUnavailable, "knowledge database not configured");
    auto q = args.at("query").get<std::string>();
    auto local = local_search ? local_search(q) : std::vector<KnowledgeEntry>{};
    return to_json(kdb->query(q, args.value("modality", std::string("any")), local,
                              args.value("top_k", std::size_t{10})));
  });
  return reg;
}

}  // namespace bencao::tools
