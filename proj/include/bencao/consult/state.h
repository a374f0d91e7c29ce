#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/common/rational.h"
#include "bencao/consult/ledger.h"
#include "bencao/consult/signals.h"
#include "bencao/domain.h"
#include "bencao/scenario/scenario.h"

namespace bencao::consult {

struct ConsultConfig {
  Rational coverage_threshold{4, 5};  // SufficientCoverage when coverage > this
  Rational gain_threshold{1, 10};     // DiminishingGain when the two-round gain < this
  std::optional<int> question_budget;  // overrides the scenario policy when set
  std::size_t retrieval_k = 4;
  std::size_t context_budget_chars = 8000;
  double stickiness = scenario::kDefaultStickiness;
  int max_tool_rounds = 2;

  void validate() const;
};

struct TranscriptTurn {
  std::string role;  // "user" | "assistant"
  std::string text;
  std::optional<std::string> image_ref;
  friend bool operator==(const TranscriptTurn&, const TranscriptTurn&) = default;
};

struct DialogueState {
  std::string session_id;
  std::string created_at;
  std::optional<ScenarioId> scenario_hint;
  std::optional<ScenarioId> scenario;  // unset until the first turn is routed
  CotStage stage = CotStage::SymptomRecognition;
  EvidenceLedger ledger;
  std::optional<Rational> baseline_coverage;  // coverage when the first questions went out
  std::vector<Rational> coverage_history;     // one entry per completed inquiry round
  int inquiry_rounds = 0;
  ModeKind mode = ModeKind::Normal;
  std::optional<SafeguardTrigger> safeguard;
  bool user_declined = false;
  bool worsening = false;
  std::optional<TerminationReason> termination;
  std::vector<std::string> pending_questions;
  std::vector<std::string> asked_questions;
  std::vector<TranscriptTurn> transcript;
  std::vector<std::string> feedback_ids;
  std::optional<json> tongue;  // last tongue analysis, canonical labels

  Rational coverage() const { return compute_coverage(ledger); }
  int user_turns() const;
  // Restricted output applies: conservative mode, or the loop ended by
  // refusal or stalled gain while a safeguard already held the mode.
  bool conservative() const;

  friend bool operator==(const DialogueState&, const DialogueState&) = default;
};

DialogueState new_state(const std::string& session_id, const std::string& created_at,
                        std::optional<ScenarioId> hint = std::nullopt);

json to_json(const DialogueState& s);
DialogueState state_from_json(const json& j);

// Outcome priority: UserDeclined, then SufficientCoverage, then DiminishingGain.
std::optional<TerminationReason> check_termination(const DialogueState& state, const ConsultConfig& config = {});

enum class EventKind {
  SessionCreated,
  UserTurn,
  ToolInvoked,
  FindingsExtracted,
  ModeChanged,
  StageAdvanced,
  ReplyEmitted,
  FeedbackLinked
};

std::string_view to_string(EventKind k);
EventKind event_kind_from(std::string_view s);

struct SessionEvent {
  std::int64_t seq = 0;  // assigned by the store; contiguous from 1
  EventKind kind = EventKind::SessionCreated;
  std::string at;        // ISO-8601 UTC
  json payload;
  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

json to_json(const SessionEvent& e);
SessionEvent event_from_json(const json& j);

// Pure reducer. Throws CorruptLog when the event cannot follow the state.
DialogueState apply(DialogueState state, const SessionEvent& event);

// Folds a whole log; the first event must be SessionCreated and sequence
// numbers must run 1, 2, 3, ...
DialogueState replay(const std::vector<SessionEvent>& events);

}  // namespace bencao::consult
