#include "bencao/consult/state.h"

#include <algorithm>

#include "bencao/common/error.h"

namespace bencao::consult {

void ConsultConfig::validate() const {
  if (coverage_threshold < Rational(0) || coverage_threshold > Rational(1)) {
    fail(ErrorCode::InvalidArgument, "coverage threshold must be in [0, 1]");
  }
  if (gain_threshold < Rational(0) || gain_threshold > Rational(1)) {
    fail(ErrorCode::InvalidArgument, "gain threshold must be in [0, 1]");
  }
  if (question_budget && (*question_budget < 1 || *question_budget > 5)) {
    fail(ErrorCode::InvalidArgument, "question budget must be in [1, 5]");
  }
  if (retrieval_k == 0) fail(ErrorCode::InvalidArgument, "retrieval_k must be positive");
  if (stickiness < 0.0 || stickiness > 1.0) fail(ErrorCode::InvalidArgument, "stickiness must be in [0, 1]");
  if (max_tool_rounds < 0) fail(ErrorCode::InvalidArgument, "max_tool_rounds must be non-negative");
}

int DialogueState::user_turns() const {
  return static_cast<int>(std::count_if(transcript.begin(), transcript.end(),
                                        [](const TranscriptTurn& t) { return t.role == "user"; }));
}

bool DialogueState::conservative() const {
  return mode == ModeKind::ConservativeCompliant ||
         (termination && *termination != TerminationReason::SufficientCoverage);
}

DialogueState new_state(const std::string& session_id, const std::string& created_at,
                        std::optional<ScenarioId> hint) {
  DialogueState s;
  s.session_id = session_id;
  s.created_at = created_at;
  s.scenario_hint = hint;
  return s;
}

namespace {

template <typename T, typename F>
json opt(const std::optional<T>& v, F&& f) {
  return v ? json(f(*v)) : json(nullptr);
}

std::string str(std::string_view s) { return std::string(s); }

json trigger_json(const SafeguardTrigger& t) { return {{"kind", to_string(t.kind)}, {"evidence", t.evidence}}; }

SafeguardTrigger trigger_from(const json& j) {
  return {safeguard_from(j.at("kind").get<std::string>()), j.at("evidence").get<std::string>()};
}

}  // namespace

json to_json(const DialogueState& s) {
  json transcript = json::array();
  for (const auto& t : s.transcript) {
    json tj = {{"role", t.role}, {"text", t.text}};
    if (t.image_ref) tj["image_ref"] = *t.image_ref;
    transcript.push_back(tj);
  }
  json history = json::array();
  for (auto r : s.coverage_history) history.push_back(rational_to_string(r));
  return json{
      {"session_id", s.session_id},
      {"created_at", s.created_at},
      {"scenario_hint", opt(s.scenario_hint, [](ScenarioId v) { return str(to_string(v)); })},
      {"scenario", opt(s.scenario, [](ScenarioId v) { return str(to_string(v)); })},
      {"stage", to_string(s.stage)},
      {"ledger", to_json(s.ledger)},
      {"baseline_coverage", opt(s.baseline_coverage, rational_to_string)},
      {"coverage_history", history},
      {"inquiry_rounds", s.inquiry_rounds},
      {"mode", to_string(s.mode)},
      {"safeguard", opt(s.safeguard, trigger_json)},
      {"user_declined", s.user_declined},
      {"worsening", s.worsening},
      {"termination", opt(s.termination, [](TerminationReason v) { return str(to_string(v)); })},
      {"pending_questions", s.pending_questions},
      {"asked_questions", s.asked_questions},
      {"transcript", transcript},
      {"feedback_ids", s.feedback_ids},
      {"tongue", s.tongue ? *s.tongue : json(nullptr)},
  };
}

DialogueState state_from_json(const json& j) {
  DialogueState s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.created_at = j.at("created_at").get<std::string>();
    if (!j.at("scenario_hint").is_null()) s.scenario_hint = scenario_from(j.at("scenario_hint").get<std::string>());
    if (!j.at("scenario").is_null()) s.scenario = scenario_from(j.at("scenario").get<std::string>());
    s.stage = stage_from(j.at("stage").get<std::string>());
    s.ledger = ledger_from_json(j.at("ledger"));
    if (!j.at("baseline_coverage").is_null()) {
      s.baseline_coverage = rational_from_string(j.at("baseline_coverage").get<std::string>());
    }
    for (const auto& r : j.at("coverage_history")) s.coverage_history.push_back(rational_from_string(r.get<std::string>()));
    s.inquiry_rounds = j.at("inquiry_rounds").get<int>();
    s.mode = mode_from(j.at("mode").get<std::string>());
    if (!j.at("safeguard").is_null()) s.safeguard = trigger_from(j.at("safeguard"));
    s.user_declined = j.at("user_declined").get<bool>();
    s.worsening = j.at("worsening").get<bool>();
    if (!j.at("termination").is_null()) s.termination = termination_from(j.at("termination").get<std::string>());
    s.pending_questions = j.at("pending_questions").get<std::vector<std::string>>();
    s.asked_questions = j.at("asked_questions").get<std::vector<std::string>>();
    for (const auto& t : j.at("transcript")) {
      TranscriptTurn turn{t.at("role").get<std::string>(), t.at("text").get<std::string>(), std::nullopt};
      if (t.contains("image_ref")) turn.image_ref = t.at("image_ref").get<std::string>();
      s.transcript.push_back(std::move(turn));
    }
    s.feedback_ids = j.at("feedback_ids").get<std::vector<std::string>>();
    if (!j.at("tongue").is_null()) s.tongue = j.at("tongue");
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("dialogue state: ") + e.what());
  }
  return s;
}

std::optional<TerminationReason> check_termination(const DialogueState& state, const ConsultConfig& config) {
  if (state.user_declined) return TerminationReason::UserDeclined;
  Rational latest = state.coverage();
  if (!state.coverage_history.empty()) latest = std::max(latest, state.coverage_history.back());
  if (latest > config.coverage_threshold) return TerminationReason::SufficientCoverage;
  const auto& h = state.coverage_history;
  if (state.inquiry_rounds >= 2 && h.size() >= 2) {
    std::size_t t = h.size() - 1;
    Rational before = t >= 2 ? h[t - 2] : state.baseline_coverage.value_or(Rational(0));
    if (h[t] - before < config.gain_threshold) return TerminationReason::DiminishingGain;
  }
  return std::nullopt;
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::SessionCreated: return "SessionCreated";
    case EventKind::UserTurn: return "UserTurn";
    case EventKind::ToolInvoked: return "ToolInvoked";
    case EventKind::FindingsExtracted: return "FindingsExtracted";
    case EventKind::ModeChanged: return "ModeChanged";
    case EventKind::StageAdvanced: return "StageAdvanced";
    case EventKind::ReplyEmitted: return "ReplyEmitted";
    case EventKind::FeedbackLinked: return "FeedbackLinked";
  }
  return "?";
}

EventKind event_kind_from(std::string_view s) {
  for (auto k : {EventKind::SessionCreated, EventKind::UserTurn, EventKind::ToolInvoked, EventKind::FindingsExtracted,
                 EventKind::ModeChanged, EventKind::StageAdvanced, EventKind::ReplyEmitted,
                 EventKind::FeedbackLinked}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::CorruptLog, "unknown event kind " + std::string(s));
}

json to_json(const SessionEvent& e) {
  return json{{"seq", e.seq}, {"kind", to_string(e.kind)}, {"at", e.at}, {"payload", e.payload}};
}

SessionEvent event_from_json(const json& j) {
  try {
    return SessionEvent{j.at("seq").get<std::int64_t>(), event_kind_from(j.at("kind").get<std::string>()),
                        j.at("at").get<std::string>(), j.at("payload")};
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptLog, std::string("malformed event: ") + e.what());
  }
}

namespace {

[[noreturn]] void corrupt(const SessionEvent& e, const std::string& why) {
  fail(ErrorCode::CorruptLog, "event " + std::to_string(e.seq) + " (" + std::string(to_string(e.kind)) + "): " + why);
}

bool mode_transition_allowed(ModeKind from, ModeKind to) {
  if (from == ModeKind::Normal) return to != ModeKind::Normal;
  return from == ModeKind::ConservativeCompliant && to == ModeKind::Safeguard;
}

void apply_findings(DialogueState& s, const SessionEvent& e) {
  std::vector<Finding> findings;
  for (const auto& f : e.payload.at("findings")) {
    findings.push_back({element_from(f.at("element").get<std::string>()), f.at("finding").get<std::string>(),
                        f.at("confidence").get<double>()});
  }
  s.ledger = update_ledger(std::move(s.ledger), findings, e.payload.at("turn_index").get<int>());
  if (s.pending_questions.empty()) return;
  // The user has answered the last batch of questions: one round done.
  auto cov = s.coverage();
  if (!s.coverage_history.empty() && cov < s.coverage_history.back()) corrupt(e, "coverage decreased");
  s.coverage_history.push_back(cov);
  ++s.inquiry_rounds;
  s.pending_questions.clear();
}

void apply_mode(DialogueState& s, const SessionEvent& e) {
  auto from = mode_from(e.payload.at("from").get<std::string>());
  auto to = mode_from(e.payload.at("to").get<std::string>());
  if (from != s.mode) corrupt(e, "mode mismatch");
  if (!mode_transition_allowed(from, to)) corrupt(e, "mode transition not allowed");
  s.mode = to;
  if (e.payload.contains("trigger") && !e.payload.at("trigger").is_null() && !s.safeguard) {
    s.safeguard = trigger_from(e.payload.at("trigger"));
  }
}

void apply_stage(DialogueState& s, const SessionEvent& e) {
  auto from = stage_from(e.payload.at("from").get<std::string>());
  auto to = stage_from(e.payload.at("to").get<std::string>());
  if (from != s.stage) corrupt(e, "stage mismatch");
  if (e.payload.contains("termination") && !e.payload.at("termination").is_null()) {
    if (s.termination) corrupt(e, "loop already terminated");
    s.termination = termination_from(e.payload.at("termination").get<std::string>());
  }
  if (!s.termination) corrupt(e, "stage advanced before the inquiry loop ended");
  int step = static_cast<int>(to) - static_cast<int>(from);
  if (step <= 0) corrupt(e, "stages only move forward");
  if (step > 1 && !(s.conservative() && to == CotStage::LifestyleRecommendation)) {
    corrupt(e, "stage skipped outside conservative mode");
  }
  s.stage = to;
}

void apply_reply(DialogueState& s, const SessionEvent& e) {
  s.transcript.push_back({"assistant", e.payload.at("text").get<std::string>(), std::nullopt});
  auto questions = e.payload.at("questions").get<std::vector<std::string>>();
  if (questions.empty()) return;
  if (!s.baseline_coverage) s.baseline_coverage = s.coverage();
  s.pending_questions = questions;
  s.asked_questions.insert(s.asked_questions.end(), questions.begin(), questions.end());
}

}  // namespace

DialogueState apply(DialogueState s, const SessionEvent& e) {
  try {
    switch (e.kind) {
      case EventKind::SessionCreated: {
        if (!s.session_id.empty()) corrupt(e, "session already created");
        std::optional<ScenarioId> hint;
        if (e.payload.contains("scenario_hint") && !e.payload.at("scenario_hint").is_null()) {
          hint = scenario_from(e.payload.at("scenario_hint").get<std::string>());
        }
        return new_state(e.payload.at("session_id").get<std::string>(), e.payload.at("created_at").get<std::string>(),
                         hint);
      }
      case EventKind::UserTurn: {
        TranscriptTurn t{"user", e.payload.at("text").get<std::string>(), std::nullopt};
        if (e.payload.contains("image_ref") && !e.payload.at("image_ref").is_null()) {
          t.image_ref = e.payload.at("image_ref").get<std::string>();
        }
        s.transcript.push_back(std::move(t));
        s.scenario = scenario_from(e.payload.at("routing").at("scenario").get<std::string>());
        s.user_declined = s.user_declined || e.payload.at("declined").get<bool>();
        s.worsening = s.worsening || e.payload.at("worsening").get<bool>();
        return s;
      }
      case EventKind::ToolInvoked:
        if (e.payload.at("tool") == "classify_tongue" && e.payload.at("ok").get<bool>()) {
          s.tongue = e.payload.at("result");
        }
        return s;
      case EventKind::FindingsExtracted: apply_findings(s, e); return s;
      case EventKind::ModeChanged: apply_mode(s, e); return s;
      case EventKind::StageAdvanced: apply_stage(s, e); return s;
      case EventKind::ReplyEmitted: apply_reply(s, e); return s;
      case EventKind::FeedbackLinked:
        s.feedback_ids.push_back(e.payload.at("feedback_id").get<std::string>());
        return s;
    }
  } catch (const json::exception& ex) {
    corrupt(e, std::string("malformed payload: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::CorruptLog) throw;
    corrupt(e, ex.what());
  }
  corrupt(e, "unhandled event kind");
}

DialogueState replay(const std::vector<SessionEvent>& events) {
  if (events.empty()) fail(ErrorCode::CorruptLog, "empty event log");
  if (events.front().kind != EventKind::SessionCreated) fail(ErrorCode::CorruptLog, "log must start with SessionCreated");
  DialogueState s;
  std::int64_t expected = 1;
  for (const auto& e : events) {
    if (e.seq != expected) {
      fail(ErrorCode::CorruptLog, "sequence gap: expected " + std::to_string(expected) + ", got " + std::to_string(e.seq));
    }
    s = apply(std::move(s), e);
    ++expected;
  }
  return s;
}

}  // namespace bencao::consult
