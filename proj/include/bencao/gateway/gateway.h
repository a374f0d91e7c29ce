#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/corpus/index.h"
#include "bencao/domain.h"
#include "bencao/net/http.h"
#include "bencao/scenario/scenario.h"

namespace bencao::gateway {

struct PersonaProfile {
  std::string version;
  std::string persona_text;
  std::map<CotStage, std::string> stage_directives;
  std::string conservative_directive;
  std::string safeguard_directive;  // "{trigger}" is substituted
  std::string direct_directive;     // scenarios answered without the inquiry loop
  std::string extraction_directive;
  std::string routing_directive;
  std::map<std::string, std::string> safety_constraints;

  static PersonaProfile from_json(const json& j);
  static PersonaProfile load(const std::string& path);
};

struct PromptSection {
  std::string name;
  std::string text;
  friend bool operator==(const PromptSection&, const PromptSection&) = default;
};

inline constexpr std::array<std::string_view, 4> kSectionOrder = {"persona", "scenario_instruction",
                                                                   "safety_constraints", "stage_directive"};

struct ContextBlock {
  std::string doc_id;
  std::string title;
  double score = 0.0;
  std::string text;
  friend bool operator==(const ContextBlock&, const ContextBlock&) = default;
};

struct Turn {
  std::string role;  // "user" or "assistant"
  std::string text;
  friend bool operator==(const Turn&, const Turn&) = default;
};

struct ToolSchema {
  std::string name;
  std::string description;
  json parameters;
};

struct PromptBundle {
  std::vector<PromptSection> system_sections;
  std::vector<ContextBlock> context_blocks;
  std::vector<Turn> history;
  std::string user_turn;
  std::vector<ToolSchema> tool_schemas;

  json to_json() const;
  std::string serialize() const { return to_json().dump(); }
};

struct PromptOptions {
  std::size_t context_budget_chars = 8000;
  bool conservative = false;
  std::optional<std::string> safeguard;  // trigger name when the safeguard is active
  std::string advisory_text;             // required advisory sentence, empty when none
  std::vector<ToolSchema> tools;
  std::optional<std::string> directive;  // replaces the stage/conservative directive
};

std::vector<ContextBlock> context_from_hits(const std::vector<corpus::RetrievalHit>& hits,
                                            const std::function<std::string(const std::string&)>& title_of);

// Drops the lowest-scored blocks (the later one on ties) until the combined
// text length in code points fits the budget. Survivors keep their order.
std::vector<ContextBlock> fit_context(std::vector<ContextBlock> blocks, std::size_t budget_chars);

PromptBundle assemble_prompt(const PersonaProfile& persona, const scenario::ScenarioPolicy& policy, CotStage stage,
                             const std::vector<ContextBlock>& context, const std::vector<Turn>& history,
                             const std::string& user_turn, const PromptOptions& options = {});

enum class Finish { Completed, Truncated, Refused };
std::string_view to_string(Finish f);

struct ToolCall {
  std::string id;
  std::string name;
  json arguments;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ProviderResponse {
  std::string text;
  std::vector<ToolCall> tool_calls;
  Finish finish = Finish::Completed;
  Usage usage;
};

// Parses an OpenAI-style chat-completion response body.
ProviderResponse parse_response(const std::string& body);

struct ProviderConfig {
  std::string endpoint;  // full chat-completions URL
  std::string model = "gpt-4o";
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::string api_key_env = "BENCAO_API_KEY";
  std::chrono::milliseconds initial_backoff{250};

  void validate() const;
};

// Sends one serialized request and returns the raw response body. Transport
// failures throw GatewayUnavailable.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string send(const std::string& request_body) = 0;
};

std::string fingerprint(const std::string& request_body);

// Deterministic provider for offline runs. Lookup order: exact request
// fingerprint, then rules in insertion order, then the default reply.
// Anything else throws MissingScript.
class ScriptedProvider final : public Provider {
 public:
  using Rule = std::function<std::optional<std::string>(const json& request)>;

  void add(const std::string& fingerprint, std::string response_body);
  void add_rule(Rule rule);
  void set_default(std::string response_body);
  // The next `n` sends throw GatewayUnavailable.
  void fail_next(int n);

  std::string send(const std::string& request_body) override;

  std::vector<std::string> requests() const;
  std::size_t script_size() const;

  // {"version":1,"entries":[{"fingerprint":..., "response":{...}}]}
  static std::shared_ptr<ScriptedProvider> load(const std::string& path);
  void save(const std::string& path) const;

  static std::string reply_body(const std::string& text, const std::string& finish_reason = "stop");
  static std::string tool_call_body(const std::string& name, const json& arguments);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> script_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_;
  int failures_ = 0;
  std::vector<std::string> requests_;
};

// Passes requests through and captures every response so the session can be
// replayed offline with a ScriptedProvider.
class RecordingProvider final : public Provider {
 public:
  explicit RecordingProvider(std::shared_ptr<Provider> inner) : inner_(std::move(inner)) {}
  std::string send(const std::string& request_body) override;
  void save(const std::string& path) const;
  std::shared_ptr<ScriptedProvider> to_scripted() const;

 private:
  std::shared_ptr<Provider> inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> recorded_;
};

class HttpProvider final : public Provider {
 public:
  HttpProvider(ProviderConfig config, std::shared_ptr<net::HttpTransport> transport);
  std::string send(const std::string& request_body) override;

 private:
  ProviderConfig config_;
  std::shared_ptr<net::HttpTransport> transport_;
};

json ledger_findings_schema();

struct ExtractionResult {
  std::vector<Finding> findings;
  std::vector<std::string> dropped;  // reasons, one per rejected entry
};

// Validates a structured-output payload against the ledger-findings schema.
ExtractionResult parse_findings(const std::string& raw);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class Gateway {
 public:
  Gateway(ProviderConfig config, std::shared_ptr<Provider> provider, Sleeper sleeper = {});

  ProviderResponse complete(const PromptBundle& bundle) const;
  ExtractionResult extract_structured(const PromptBundle& bundle, const json& schema = ledger_findings_schema()) const;

  std::string request_body(const PromptBundle& bundle, const json* response_format = nullptr) const;
  const ProviderConfig& config() const { return config_; }
  std::uint64_t attempts() const { return attempts_.load(); }

 private:
  std::string send_with_retries(const std::string& body) const;

  ProviderConfig config_;
  std::shared_ptr<Provider> provider_;
  Sleeper sleeper_;
  mutable std::atomic<std::uint64_t> attempts_{0};
};

}  // namespace bencao::gateway
