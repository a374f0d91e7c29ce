#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/consult/planner.h"
#include "bencao/consult/signals.h"
#include "bencao/consult/state.h"
#include "bencao/corpus/knowledge_base.h"
#include "bencao/gateway/gateway.h"
#include "bencao/safety/safety.h"
#include "bencao/scenario/scenario.h"
#include "bencao/tools/tools.h"

namespace bencao::consult {

// Deterministic reply texts used when no model is configured. "{findings}"
// is replaced by the recorded ledger findings.
struct OfflineReplies {
  std::string version;
  scenario::LocalizedText questions_intro;
  std::map<CotStage, scenario::LocalizedText> stages;
  scenario::LocalizedText conservative;
  scenario::LocalizedText direct;
  scenario::LocalizedText no_findings;

  static OfflineReplies from_json(const json& j);
  static OfflineReplies load(const std::string& path);
};

// Read-only configuration data shared by every session.
struct EngineResources {
  scenario::PolicyCatalog policies;
  scenario::ScenarioClassifier classifier;
  safety::SafetyGuard guard;
  gateway::PersonaProfile persona;
  InquiryPool pool;
  SafeguardDetector safeguards;
  DialogueCues cues;
  RuleExtractor extractor;
  OfflineReplies offline;
  tools::TongueLabelMap tongue_labels;

  // Loads the standard layout under a data directory. `disclaimers` maps a
  // scenario name to {"en", "zh"} and replaces that policy's disclaimer.
  static std::shared_ptr<const EngineResources> load(const std::filesystem::path& data_dir,
                                                     const json& disclaimers = json::object());
};

struct TurnInput {
  std::string text;
  std::optional<std::string> image_ref;
};

struct ReplyDraft {
  std::string text;
  std::vector<InquiryQuestion> questions;
  std::vector<std::string> source_titles;
  std::optional<gateway::PromptBundle> bundle;  // set when the text came from the model
};

struct StepResult {
  DialogueState state;
  std::vector<SessionEvent> events;  // seq left at 0 for the store to assign
  ReplyDraft draft;
  scenario::ScenarioPolicy policy;
};

struct TurnOutcome {
  DialogueState state;
  std::vector<SessionEvent> events;
  scenario::RoutingDecision routing;
  scenario::ScenarioPolicy policy;
  safety::SafetyContext safety_context;
  std::string draft_text;  // before enforcement
  safety::ComplianceReport draft_report;
  safety::SafeReply reply;
  std::vector<InquiryQuestion> questions;
};

// Replaces finding extraction, e.g. with a scripted answer model.
using FindingSource = std::function<std::vector<Finding>(const std::string& text, const DialogueState& state)>;

struct EngineDeps {
  std::shared_ptr<const EngineResources> resources;
  std::shared_ptr<const gateway::Gateway> gateway;          // null: offline templates and rule extraction
  std::shared_ptr<const corpus::KnowledgeBase> knowledge;   // null: no retrieval
  std::shared_ptr<const tools::ToolRegistry> tools;         // null: no tool calls
  std::shared_ptr<const scenario::InstructionSource> instructions;
  std::shared_ptr<Clock> clock;                             // defaults to the system clock
  FindingSource finding_source;
  ConsultConfig config;
  bool llm_routing = true;  // ask the model when cue routing is ambiguous
};

class Engine {
 public:
  explicit Engine(EngineDeps deps);

  SessionEvent created_event(const std::string& session_id, std::optional<ScenarioId> hint = std::nullopt) const;

  scenario::RoutingDecision route(const DialogueState& state, const std::string& text) const;
  scenario::ScenarioPolicy policy_for(ScenarioId scenario) const;

  // One orchestration step without safety enforcement. Pure with respect to
  // `state`: the caller commits the returned events or discards them.
  StepResult advance(const DialogueState& state, const TurnInput& input,
                     const scenario::RoutingDecision& routing) const;

  // route -> advance -> enforce, ending with the ReplyEmitted event.
  TurnOutcome run_turn(const DialogueState& state, const TurnInput& input) const;

  const EngineDeps& deps() const { return deps_; }

 private:
  std::vector<Finding> extract(const std::string& text, const DialogueState& state, std::string& source,
                               std::vector<std::string>& dropped) const;
  std::vector<gateway::ContextBlock> retrieve(const scenario::ScenarioPolicy& policy, const std::string& query) const;
  std::string offline_text(const DialogueState& state, const scenario::ScenarioPolicy& policy,
                           const std::vector<gateway::ContextBlock>& context, bool chinese) const;

  EngineDeps deps_;
  scenario::ScenarioClassifier classifier_;
};

// Asks the model to pick a scenario; used as the classifier fallback.
scenario::FallbackClassifier make_llm_fallback(std::shared_ptr<const gateway::Gateway> gateway,
                                               const gateway::PersonaProfile& persona);

std::string question_list_text(const scenario::LocalizedText& intro, const std::vector<InquiryQuestion>& questions,
                               bool chinese);

}  // namespace bencao::consult
