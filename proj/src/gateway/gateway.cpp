#include "bencao/gateway/gateway.h"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::gateway {

PersonaProfile PersonaProfile::from_json(const json& j) {
  PersonaProfile p;
  try {
    p.version = j.at("version").get<std::string>();
    p.persona_text = j.at("persona_text").get<std::string>();
    for (const auto& [k, v] : j.at("stage_directives").items()) p.stage_directives[stage_from(k)] = v.get<std::string>();
    p.conservative_directive = j.at("conservative_directive").get<std::string>();
    p.safeguard_directive = j.at("safeguard_directive").get<std::string>();
    p.safety_constraints = j.at("safety_constraints").get<std::map<std::string, std::string>>();
    p.direct_directive = j.value("direct_directive", std::string{});
    p.extraction_directive = j.value("extraction_directive", std::string{});
    p.routing_directive = j.value("routing_directive", std::string{});
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("persona: ") + e.what());
  }
  if (p.persona_text.empty()) fail(ErrorCode::SchemaError, "persona_text must be non-empty");
  if (p.stage_directives.size() != 4) fail(ErrorCode::SchemaError, "persona needs a directive for every stage");
  return p;
}

PersonaProfile PersonaProfile::load(const std::string& path) { return from_json(read_json_file(path)); }

json PromptBundle::to_json() const {
  json sections = json::array();
  for (const auto& s : system_sections) sections.push_back({{"name", s.name}, {"text", s.text}});
  json ctx = json::array();
  for (const auto& c : context_blocks) {
    ctx.push_back({{"doc_id", c.doc_id}, {"title", c.title}, {"score", c.score}, {"text", c.text}});
  }
  json hist = json::array();
  for (const auto& t : history) hist.push_back({{"role", t.role}, {"text", t.text}});
  json tools = json::array();
  for (const auto& t : tool_schemas) {
    tools.push_back({{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}});
  }
  return json{{"system_sections", sections}, {"context_blocks", ctx}, {"history", hist},
              {"user_turn", user_turn}, {"tool_schemas", tools}};
}

std::vector<ContextBlock> context_from_hits(const std::vector<corpus::RetrievalHit>& hits,
                                            const std::function<std::string(const std::string&)>& title_of) {
  std::vector<ContextBlock> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.doc_id, title_of(h.doc_id), h.score, h.snippet});
  return out;
}

std::vector<ContextBlock> fit_context(std::vector<ContextBlock> blocks, std::size_t budget_chars) {
  std::size_t total = 0;
  for (const auto& b : blocks) total += text::utf8_length(b.text);
  while (total > budget_chars && !blocks.empty()) {
    std::size_t victim = 0;
    for (std::size_t i = 1; i < blocks.size(); ++i) {
      if (blocks[i].score <= blocks[victim].score) victim = i;
    }
    total -= text::utf8_length(blocks[victim].text);
    blocks.erase(blocks.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  return blocks;
}

namespace {

std::string substitute(std::string s, const std::string& key, const std::string& value) {
  for (auto at = s.find(key); at != std::string::npos; at = s.find(key, at + value.size())) {
    s.replace(at, key.size(), value);
  }
  return s;
}

std::string constraint(const PersonaProfile& persona, const std::string& key) {
  auto it = persona.safety_constraints.find(key);
  return it == persona.safety_constraints.end() ? std::string{} : it->second;
}

}  // namespace

PromptBundle assemble_prompt(const PersonaProfile& persona, const scenario::ScenarioPolicy& policy, CotStage stage,
                             const std::vector<ContextBlock>& context, const std::vector<Turn>& history,
                             const std::string& user_turn, const PromptOptions& options) {
  if (persona.persona_text.empty()) fail(ErrorCode::InvalidArgument, "persona must be non-empty");
  if (policy.instruction_text.empty()) fail(ErrorCode::InvalidArgument, "policy instruction must be non-empty");

  std::vector<std::string> rules;
  if (policy.required_disclaimer) {
    rules.push_back(substitute(constraint(persona, "disclaimer"), "{disclaimer}", policy.required_disclaimer->en));
  }
  if (policy.requires_citation) rules.push_back(constraint(persona, "citation"));
  if (!options.advisory_text.empty()) {
    rules.push_back(substitute(constraint(persona, "advisory"), "{advisory}", options.advisory_text));
  }
  for (auto c : policy.forbidden_classes) rules.push_back(constraint(persona, std::string(scenario::to_string(c))));
  std::string safety;
  for (const auto& r : rules) {
    if (r.empty()) continue;
    if (!safety.empty()) safety += "\n";
    safety += "- " + r;
  }

  std::string directive = options.directive          ? *options.directive
                          : options.conservative ? persona.conservative_directive
                                                 : persona.stage_directives.at(stage);
  if (options.safeguard) {
    directive += "\n" + substitute(persona.safeguard_directive, "{trigger}", *options.safeguard);
  }

  PromptBundle b;
  b.system_sections = {{"persona", persona.persona_text},
                       {"scenario_instruction", policy.instruction_text},
                       {"safety_constraints", safety},
                       {"stage_directive", directive}};
  b.context_blocks = fit_context(context, options.context_budget_chars);
  b.history = history;
  b.user_turn = user_turn;
  b.tool_schemas = options.tools;
  return b;
}

std::string_view to_string(Finish f) {
  switch (f) {
    case Finish::Completed: return "Completed";
    case Finish::Truncated: return "Truncated";
    case Finish::Refused: return "Refused";
  }
  return "?";
}

ProviderResponse parse_response(const std::string& body) {
  ProviderResponse r;
  try {
    auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    const auto& msg = choice.at("message");
    if (msg.contains("content") && msg.at("content").is_string()) r.text = msg.at("content").get<std::string>();
    if (msg.contains("tool_calls") && msg.at("tool_calls").is_array()) {
      for (const auto& tc : msg.at("tool_calls")) {
        ToolCall call;
        call.id = tc.value("id", std::string{});
        const auto& fn = tc.at("function");
        call.name = fn.at("name").get<std::string>();
        const auto& args = fn.at("arguments");
        call.arguments = args.is_string() ? json::parse(args.get<std::string>()) : args;
        r.tool_calls.push_back(std::move(call));
      }
    }
    std::string reason = choice.value("finish_reason", std::string("stop"));
    bool refused = msg.contains("refusal") && msg.at("refusal").is_string();
    if (refused || reason == "content_filter") {
      r.finish = Finish::Refused;
      if (refused && r.text.empty()) r.text = msg.at("refusal").get<std::string>();
    } else if (reason == "length") {
      r.finish = Finish::Truncated;
    }
    if (j.contains("usage")) {
      r.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0);
      r.usage.completion_tokens = j.at("usage").value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::GatewayUnavailable, std::string("malformed provider response: ") + e.what());
  }
  return r;
}

void ProviderConfig::validate() const {
  if (timeout.count() <= 0) fail(ErrorCode::InvalidArgument, "provider timeout must be positive");
  if (max_retries < 0) fail(ErrorCode::InvalidArgument, "provider max_retries must be >= 0");
  if (initial_backoff.count() < 0) fail(ErrorCode::InvalidArgument, "provider backoff must be >= 0");
}

std::string fingerprint(const std::string& request_body) { return fnv1a64_hex(request_body); }

void ScriptedProvider::add(const std::string& fp, std::string response_body) {
  std::lock_guard lock(mu_);
  script_[fp] = std::move(response_body);
}

void ScriptedProvider::add_rule(Rule rule) {
  std::lock_guard lock(mu_);
  rules_.push_back(std::move(rule));
}

void ScriptedProvider::set_default(std::string response_body) {
  std::lock_guard lock(mu_);
  default_ = std::move(response_body);
}

void ScriptedProvider::fail_next(int n) {
  std::lock_guard lock(mu_);
  failures_ = n;
}

std::string ScriptedProvider::send(const std::string& request_body) {
  std::vector<Rule> rules;
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request_body);
    if (failures_ > 0) {
      --failures_;
      fail(ErrorCode::GatewayUnavailable, "scripted transport failure");
    }
    if (auto it = script_.find(fingerprint(request_body)); it != script_.end()) return it->second;
    rules = rules_;
  }
  if (!rules.empty()) {
    json request = json::parse(request_body);
    for (const auto& rule : rules) {
      if (auto r = rule(request)) return *r;
    }
  }
  std::lock_guard lock(mu_);
  if (default_) return *default_;
  fail(ErrorCode::MissingScript, "no scripted response for request " + fingerprint(request_body));
}

std::vector<std::string> ScriptedProvider::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t ScriptedProvider::script_size() const {
  std::lock_guard lock(mu_);
  return script_.size();
}

namespace {

json script_json(const std::map<std::string, std::string>& entries) {
  json arr = json::array();
  for (const auto& [fp, body] : entries) {
    json response;
    try {
      response = json::parse(body);
    } catch (const json::exception&) {
      response = body;
    }
    arr.push_back({{"fingerprint", fp}, {"response", response}});
  }
  return json{{"version", 1}, {"entries", arr}};
}

}  // namespace

std::shared_ptr<ScriptedProvider> ScriptedProvider::load(const std::string& path) {
  auto j = read_json_file(path);
  auto p = std::make_shared<ScriptedProvider>();
  try {
    for (const auto& e : j.at("entries")) {
      const auto& r = e.at("response");
      p->add(e.at("fingerprint").get<std::string>(), r.is_string() ? r.get<std::string>() : r.dump());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, path + ": " + e.what());
  }
  return p;
}

void ScriptedProvider::save(const std::string& path) const {
  std::lock_guard lock(mu_);
  write_file_atomic(path, script_json(script_).dump(1));
}

std::string ScriptedProvider::reply_body(const std::string& text, const std::string& finish_reason) {
  return json{{"choices", {{{"index", 0},
                            {"message", {{"role", "assistant"}, {"content", text}}},
                            {"finish_reason", finish_reason}}}},
              {"usage", {{"prompt_tokens", 0}, {"completion_tokens", 0}}}}
      .dump();
}

std::string ScriptedProvider::tool_call_body(const std::string& name, const json& arguments) {
  json call = {{"id", "call-1"},
               {"type", "function"},
               {"function", {{"name", name}, {"arguments", arguments.dump()}}}};
  return json{{"choices", {{{"index", 0},
                            {"message", {{"role", "assistant"}, {"content", nullptr}, {"tool_calls", {call}}}},
                            {"finish_reason", "tool_calls"}}}}}
      .dump();
}

std::string RecordingProvider::send(const std::string& request_body) {
  auto response = inner_->send(request_body);
  std::lock_guard lock(mu_);
  recorded_[fingerprint(request_body)] = response;
  return response;
}

void RecordingProvider::save(const std::string& path) const {
  std::lock_guard lock(mu_);
  write_file_atomic(path, script_json(recorded_).dump(1));
}

std::shared_ptr<ScriptedProvider> RecordingProvider::to_scripted() const {
  auto p = std::make_shared<ScriptedProvider>();
  std::lock_guard lock(mu_);
  for (const auto& [fp, body] : recorded_) p->add(fp, body);
  return p;
}

HttpProvider::HttpProvider(ProviderConfig config, std::shared_ptr<net::HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  net::parse_url(config_.endpoint);
}

std::string HttpProvider::send(const std::string& request_body) {
  net::HttpRequest req;
  req.url = config_.endpoint;
  req.body = request_body;
  req.timeout = config_.timeout;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      req.headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  auto res = transport_->send(req);
  if (res.status == 0) fail(ErrorCode::GatewayUnavailable, "provider unreachable: " + res.error);
  if (!res.ok()) {
    fail(ErrorCode::GatewayUnavailable, "provider returned HTTP " + std::to_string(res.status));
  }
  return res.body;
}

json ledger_findings_schema() {
  json elements = json::array();
  for (auto e : kAllElements) elements.push_back(to_string(e));
  return json{
      {"type", "object"},
      {"additionalProperties", false},
      {"required", {"findings"}},
      {"properties",
       {{"findings",
         {{"type", "array"},
          {"items",
           {{"type", "object"},
            {"additionalProperties", false},
            {"required", {"element", "finding", "confidence"}},
            {"properties",
             {{"element", {{"type", "string"}, {"enum", elements}}},
              {"finding", {{"type", "string"}}},
              {"confidence", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}}}}}}}}}}};
}

ExtractionResult parse_findings(const std::string& raw) {
  ExtractionResult out;
  if (text::trim(raw).empty()) return out;
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedStructuredOutput, std::string("findings are not JSON: ") + e.what());
  }
  const json* items = nullptr;
  if (j.is_object() && j.contains("findings") && j.at("findings").is_array()) items = &j.at("findings");
  else if (j.is_array()) items = &j;
  if (!items) fail(ErrorCode::MalformedStructuredOutput, "findings payload has no findings array");

  for (const auto& item : *items) {
    auto drop = [&](const std::string& why) {
      out.dropped.push_back(why);
      spdlog::warn("dropped extracted finding: {} ({})", why, item.dump());
    };
    if (!item.is_object()) { drop("not an object"); continue; }
    if (!item.contains("element") || !item.at("element").is_string()) { drop("missing element"); continue; }
    auto element = parse_element(item.at("element").get<std::string>());
    if (!element) { drop("unknown element " + item.at("element").get<std::string>()); continue; }
    if (!item.contains("finding") || !item.at("finding").is_string() ||
        text::trim(item.at("finding").get<std::string>()).empty()) {
      drop("missing finding text");
      continue;
    }
    double confidence = 1.0;
    if (item.contains("confidence")) {
      if (!item.at("confidence").is_number()) { drop("confidence is not a number"); continue; }
      confidence = item.at("confidence").get<double>();
      if (confidence < 0.0 || confidence > 1.0) { drop("confidence out of range"); continue; }
    }
    out.findings.push_back({*element, item.at("finding").get<std::string>(), confidence});
  }
  return out;
}

Gateway::Gateway(ProviderConfig config, std::shared_ptr<Provider> provider, Sleeper sleeper)
    : config_(std::move(config)), provider_(std::move(provider)), sleeper_(std::move(sleeper)) {
  config_.validate();
  if (!provider_) fail(ErrorCode::InvalidArgument, "gateway needs a provider");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string Gateway::request_body(const PromptBundle& bundle, const json* response_format) const {
  std::string system;
  for (const auto& s : bundle.system_sections) {
    if (!system.empty()) system += "\n\n";
    system += "## " + s.name + "\n" + s.text;
  }
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", system}});
  if (!bundle.context_blocks.empty()) {
    std::string ctx = "Reference material:";
    for (const auto& c : bundle.context_blocks) ctx += "\n\n[Source: " + c.title + "]\n" + c.text;
    messages.push_back({{"role", "system"}, {"content", ctx}});
  }
  for (const auto& t : bundle.history) messages.push_back({{"role", t.role}, {"content", t.text}});
  messages.push_back({{"role", "user"}, {"content", bundle.user_turn}});

  json req = {{"model", config_.model}, {"messages", messages}, {"temperature", 0}};
  if (!bundle.tool_schemas.empty()) {
    json tools = json::array();
    for (const auto& t : bundle.tool_schemas) {
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    }
    req["tools"] = tools;
  }
  if (response_format) req["response_format"] = *response_format;
  return req.dump();
}

std::string Gateway::send_with_retries(const std::string& body) const {
  auto backoff = config_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    ++attempts_;
    try {
      return provider_->send(body);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::GatewayUnavailable || attempt >= config_.max_retries) throw;
      spdlog::debug("provider attempt {} failed: {}", attempt + 1, e.what());
    }
    sleeper_(backoff);
    backoff *= 2;
  }
}

ProviderResponse Gateway::complete(const PromptBundle& bundle) const {
  return parse_response(send_with_retries(request_body(bundle)));
}

ExtractionResult Gateway::extract_structured(const PromptBundle& bundle, const json& schema) const {
  json format = {{"type", "json_schema"},
                 {"json_schema", {{"name", "ledger_findings"}, {"strict", true}, {"schema", schema}}}};
  auto response = parse_response(send_with_retries(request_body(bundle, &format)));
  return parse_findings(response.text);
}

}  // namespace bencao::gateway
