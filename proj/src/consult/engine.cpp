#include "bencao/consult/engine.h"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::consult {

OfflineReplies OfflineReplies::from_json(const json& j) {
  OfflineReplies r;
  try {
    r.version = j.at("version").get<std::string>();
    r.questions_intro = scenario::localized_from(j.at("questions_intro"));
    for (const auto& [k, v] : j.at("stages").items()) r.stages[stage_from(k)] = scenario::localized_from(v);
    r.conservative = scenario::localized_from(j.at("conservative"));
    r.direct = scenario::localized_from(j.at("direct"));
    r.no_findings = scenario::localized_from(j.at("no_findings"));
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("offline replies: ") + e.what());
  }
  if (r.stages.size() != 4) fail(ErrorCode::SchemaError, "offline replies need a text for every stage");
  return r;
}

OfflineReplies OfflineReplies::load(const std::string& path) { return from_json(read_json_file(path)); }

std::shared_ptr<const EngineResources> EngineResources::load(const std::filesystem::path& dir,
                                                             const json& disclaimers) {
  auto p = [&](const char* rel) { return (dir / rel).string(); };
  auto policies = read_json_file(p("policies/scenario_policies.json"));
  for (const auto& [name, text] : disclaimers.items()) {
    auto& entry = policies.at("policies").at(std::string(to_string(scenario_from(name))));
    entry["required_disclaimer"] = text;
  }
  return std::make_shared<const EngineResources>(EngineResources{
      scenario::PolicyCatalog::from_json(policies),
      scenario::ScenarioClassifier::load(p("lexicons/scenario_cues.json")),
      safety::SafetyGuard::load(p("lexicons/safety.json")),
      gateway::PersonaProfile::load(p("persona/persona.json")),
      InquiryPool::load(p("inquiry/pool.json")),
      SafeguardDetector::load(p("lexicons/safeguard_cues.json")),
      DialogueCues::load(p("lexicons/dialogue_cues.json")),
      RuleExtractor::load(p("lexicons/finding_cues.json")),
      OfflineReplies::load(p("persona/offline_replies.json")),
      tools::TongueLabelMap::load(p("tools/tongue_labels.json")),
  });
}

std::string question_list_text(const scenario::LocalizedText& intro, const std::vector<InquiryQuestion>& questions,
                               bool chinese) {
  std::string out = intro.pick(chinese);
  for (std::size_t i = 0; i < questions.size(); ++i) {
    out += "\n" + std::to_string(i + 1) + ". " + questions[i].text.pick(chinese);
  }
  return out;
}

scenario::FallbackClassifier make_llm_fallback(std::shared_ptr<const gateway::Gateway> gw,
                                               const gateway::PersonaProfile& persona) {
  std::string directive = persona.routing_directive;
  std::string persona_text = persona.persona_text;
  return [gw, directive, persona_text](const std::string& message,
                                       const std::vector<std::string>& history) -> std::optional<scenario::RoutingDecision> {
    if (directive.empty()) return std::nullopt;
    gateway::PromptBundle b;
    b.system_sections = {{"persona", persona_text}, {"scenario_instruction", directive}};
    for (const auto& h : history) b.history.push_back({"user", h});
    b.user_turn = message;
    auto response = gw->complete(b);
    auto j = json::parse(response.text, nullptr, false);
    if (!j.is_object() || !j.contains("scenario") || !j.at("scenario").is_string()) return std::nullopt;
    auto s = parse_scenario(j.at("scenario").get<std::string>());
    if (!s) return std::nullopt;
    double confidence = j.value("confidence", 0.5);
    return scenario::RoutingDecision{*s, std::clamp(confidence, 0.0, 1.0), {}};
  };
}

namespace {

const EngineResources& checked(const EngineDeps& deps) {
  if (!deps.resources) fail(ErrorCode::InvalidArgument, "engine needs resources");
  return *deps.resources;
}

}  // namespace

Engine::Engine(EngineDeps deps) : deps_(std::move(deps)), classifier_(checked(deps_).classifier) {
  deps_.config.validate();
  if (!deps_.clock) deps_.clock = std::make_shared<SystemClock>();
  if (deps_.gateway && deps_.llm_routing) {
    classifier_.set_fallback(make_llm_fallback(deps_.gateway, deps_.resources->persona));
  }
}

SessionEvent Engine::created_event(const std::string& session_id, std::optional<ScenarioId> hint) const {
  auto at = deps_.clock->now_iso8601();
  json payload = {{"session_id", session_id}, {"created_at", at}, {"scenario_hint", nullptr}};
  if (hint) payload["scenario_hint"] = to_string(*hint);
  return SessionEvent{0, EventKind::SessionCreated, at, payload};
}

scenario::ScenarioPolicy Engine::policy_for(ScenarioId scenario) const {
  return deps_.resources->policies.policy_for(scenario, deps_.instructions.get());
}

scenario::RoutingDecision Engine::route(const DialogueState& state, const std::string& text) const {
  std::vector<std::string> history;
  for (const auto& t : state.transcript) {
    if (t.role == "user") history.push_back(t.text);
  }
  auto decision = classifier_.classify(text, history);
  auto current = state.scenario ? state.scenario : state.scenario_hint;
  auto chosen = scenario::resolve_sticky(current, decision, deps_.config.stickiness);
  if (chosen != decision.scenario) {
    decision.rationale.push_back("sticky");
    decision.scenario = chosen;
  }
  return decision;
}

namespace {

json findings_json(const std::vector<Finding>& findings) {
  json arr = json::array();
  for (const auto& f : findings) {
    arr.push_back({{"element", to_string(f.element)}, {"finding", f.text}, {"confidence", f.confidence}});
  }
  return arr;
}

std::vector<gateway::Turn> history_of(const DialogueState& state, std::size_t exclude_tail, std::size_t limit = 12) {
  std::vector<gateway::Turn> out;
  std::size_t n = state.transcript.size() - std::min(exclude_tail, state.transcript.size());
  std::size_t from = n > limit ? n - limit : 0;
  for (std::size_t i = from; i < n; ++i) out.push_back({state.transcript[i].role, state.transcript[i].text});
  return out;
}

std::string substitute(std::string s, const std::string& key, const std::string& value) {
  if (auto at = s.find(key); at != std::string::npos) s.replace(at, key.size(), value);
  return s;
}

json tool_event(const tools::ToolInvocation& call, const tools::ToolResult& result) {
  json j = {{"call_id", call.id}, {"tool", call.name}, {"arguments", call.arguments}, {"ok", result.ok()},
            {"result", result.payload ? *result.payload : json(nullptr)}};
  if (result.error) {
    j["error"] = {{"code", error_code_name(result.error->code)}, {"message", result.error->message}};
  }
  return j;
}

CotStage next_stage(CotStage s) { return static_cast<CotStage>(static_cast<int>(s) + 1); }

}  // namespace

std::vector<Finding> Engine::extract(const std::string& text, const DialogueState& state, std::string& source,
                                     std::vector<std::string>& dropped) const {
  const auto& res = *deps_.resources;
  if (deps_.finding_source) {
    source = "custom";
    return deps_.finding_source(text, state);
  }
  if (!deps_.gateway) {
    source = "rules";
    return res.extractor.extract(text);
  }
  gateway::PromptBundle b;
  std::string asked;
  for (const auto& id : state.pending_questions) {
    if (const auto* q = res.pool.find(id)) asked += (asked.empty() ? "" : "\n") + q->text.en;
  }
  b.system_sections = {{"persona", res.persona.persona_text},
                       {"scenario_instruction", res.persona.extraction_directive},
                       {"stage_directive", asked.empty() ? std::string{} : "Questions just asked:\n" + asked}};
  b.user_turn = text;
  try {
    auto r = deps_.gateway->extract_structured(b);
    source = "gateway";
    dropped = r.dropped;
    return r.findings;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MalformedStructuredOutput) throw;
    spdlog::warn("structured extraction failed, using rule extractor: {}", e.what());
    source = "rules";
    dropped = {e.what()};
    return res.extractor.extract(text);
  }
}

std::vector<gateway::ContextBlock> Engine::retrieve(const scenario::ScenarioPolicy& policy,
                                                    const std::string& query) const {
  if (!deps_.knowledge) return {};
  const auto& kb = *deps_.knowledge;
  std::set<std::string> routed;
  for (const auto& tag : policy.knowledge_tags) {
    for (const auto& id : corpus::route_category(kb.registry, tag)) routed.insert(id);
  }
  auto k = deps_.config.retrieval_k;
  auto hits = kb.index.retrieve(query, routed.empty() ? k : k * 4);
  std::vector<corpus::RetrievalHit> kept;
  for (const auto& h : hits) {
    if (routed.count(h.doc_id) && kept.size() < k) kept.push_back(h);
  }
  if (kept.empty()) kept.assign(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(std::min(k, hits.size())));
  return gateway::context_from_hits(kept, [&](const std::string& id) { return kb.title_of(id); });
}

std::string Engine::offline_text(const DialogueState& state, const scenario::ScenarioPolicy& policy,
                                 const std::vector<gateway::ContextBlock>& context, bool chinese) const {
  const auto& off = deps_.resources->offline;
  if (!policy.uses_inquiry) {
    std::string out = off.direct.pick(chinese);
    if (!context.empty()) out += "\n\n" + context.front().text;
    return out;
  }
  std::string findings;
  for (auto e : kAllElements) {
    if (!state.ledger.is_known(e)) continue;
    if (!findings.empty()) findings += chinese ? "；" : "; ";
    findings += state.ledger[e].finding;
  }
  if (findings.empty()) findings = off.no_findings.pick(chinese);
  const auto& tmpl = state.conservative() ? off.conservative : off.stages.at(state.stage);
  return substitute(tmpl.pick(chinese), "{findings}", findings);
}

StepResult Engine::advance(const DialogueState& state, const TurnInput& input,
                           const scenario::RoutingDecision& routing) const {
  const auto& res = *deps_.resources;
  StepResult r;
  r.state = state;
  auto emit = [&](EventKind kind, json payload) {
    SessionEvent e{0, kind, deps_.clock->now_iso8601(), std::move(payload)};
    r.state = apply(std::move(r.state), e);
    r.events.push_back(std::move(e));
  };

  r.policy = policy_for(routing.scenario);
  const auto& policy = r.policy;
  int turn_index = static_cast<int>(state.transcript.size());
  bool chinese = text::mostly_cjk(input.text);

  emit(EventKind::UserTurn, {{"turn_index", turn_index},
                             {"text", input.text},
                             {"image_ref", input.image_ref ? json(*input.image_ref) : json(nullptr)},
                             {"routing", scenario::to_json(routing)},
                             {"declined", res.cues.declined(input.text)},
                             {"worsening", res.cues.worsening(input.text)}});

  std::vector<Finding> findings;
  std::vector<std::string> sources;
  if (input.image_ref && deps_.tools && deps_.tools->has("classify_tongue")) {
    tools::ToolInvocation call{"call-" + std::to_string(turn_index) + "-tongue", "classify_tongue",
                               {{"image_ref", *input.image_ref}}};
    auto result = deps_.tools->dispatch(call);
    emit(EventKind::ToolInvoked, tool_event(call, result));
    if (result.ok()) {
      auto tongue = tools::tongue_findings(tools::tongue_from_json(*result.payload), res.tongue_labels);
      findings.insert(findings.end(), tongue.begin(), tongue.end());
      if (!tongue.empty()) sources.push_back("tool");
    }
  }

  bool in_loop = policy.uses_inquiry && r.state.stage == CotStage::SymptomRecognition && !r.state.termination;
  if (in_loop) {
    std::string source;
    std::vector<std::string> dropped;
    auto extracted = extract(input.text, r.state, source, dropped);
    if (!extracted.empty() || sources.empty()) sources.push_back(source);
    findings.insert(findings.end(), extracted.begin(), extracted.end());
    emit(EventKind::FindingsExtracted, {{"turn_index", turn_index},
                                        {"findings", findings_json(findings)},
                                        {"sources", sources},
                                        {"dropped", dropped}});
  }

  if (auto trigger = res.safeguards.detect(input.text, findings);
      trigger && !r.state.safeguard && r.state.mode != ModeKind::Safeguard) {
    emit(EventKind::ModeChanged, {{"from", to_string(r.state.mode)},
                                  {"to", to_string(ModeKind::Safeguard)},
                                  {"trigger", {{"kind", to_string(trigger->kind)}, {"evidence", trigger->evidence}}}});
  }

  auto terminate = [&](TerminationReason reason) {
    bool conservative = reason != TerminationReason::SufficientCoverage;
    if (conservative && r.state.mode == ModeKind::Normal) {
      emit(EventKind::ModeChanged, {{"from", to_string(ModeKind::Normal)},
                                    {"to", to_string(ModeKind::ConservativeCompliant)},
                                    {"reason", to_string(reason)}});
    }
    auto to = conservative ? CotStage::LifestyleRecommendation : CotStage::PatternDifferentiation;
    emit(EventKind::StageAdvanced,
         {{"from", to_string(r.state.stage)}, {"to", to_string(to)}, {"termination", to_string(reason)}});
  };

  if (in_loop) {
    auto reason = check_termination(r.state, deps_.config);
    if (!reason) {
      int budget = deps_.config.question_budget.value_or(policy.question_budget_per_round);
      try {
        r.draft.questions = plan_inquiry(r.state.ledger, res.pool.without(r.state.asked_questions), budget);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyPool) throw;
      }
      // Nothing left worth asking counts as stalled gain.
      if (r.draft.questions.empty()) reason = TerminationReason::DiminishingGain;
    }
    if (reason) terminate(*reason);
  } else if (policy.uses_inquiry && r.state.termination && r.state.stage != CotStage::LifestyleRecommendation) {
    auto from = r.state.stage;
    emit(EventKind::StageAdvanced, {{"from", to_string(from)}, {"to", to_string(next_stage(from))}});
  }

  if (!r.draft.questions.empty()) {
    r.draft.text = question_list_text(res.offline.questions_intro, r.draft.questions, chinese);
    return r;
  }

  const auto& s = r.state;
  safety::SafetyContext ctx{s.conservative(), s.safeguard.has_value(), s.worsening, {}};
  auto context = retrieve(policy, input.text);
  for (const auto& c : context) {
    if (std::find(r.draft.source_titles.begin(), r.draft.source_titles.end(), c.title) == r.draft.source_titles.end()) {
      r.draft.source_titles.push_back(c.title);
    }
  }
  if (!deps_.gateway) {
    r.draft.text = offline_text(s, policy, context, chinese);
    return r;
  }

  gateway::PromptOptions opts;
  opts.context_budget_chars = deps_.config.context_budget_chars;
  opts.conservative = s.conservative();
  if (s.safeguard) opts.safeguard = std::string(to_string(s.safeguard->kind));
  if (res.guard.advisory_required(policy, ctx)) opts.advisory_text = res.guard.risk_advisory().pick(chinese);
  if (!policy.uses_inquiry && !res.persona.direct_directive.empty()) opts.directive = res.persona.direct_directive;
  if (deps_.tools) {
    for (const auto& spec : deps_.tools->specs()) {
      if (spec.name != "classify_tongue") opts.tools.push_back({spec.name, spec.description, spec.arguments});
    }
  }
  auto bundle = gateway::assemble_prompt(res.persona, policy, s.stage, context, history_of(s, 1), input.text, opts);

  auto response = deps_.gateway->complete(bundle);
  for (int round = 0; !response.tool_calls.empty(); ++round) {
    if (round >= deps_.config.max_tool_rounds) {
      bundle.tool_schemas.clear();
      response = deps_.gateway->complete(bundle);
      break;
    }
    for (const auto& tc : response.tool_calls) {
      tools::ToolInvocation call{tc.id, tc.name, tc.arguments};
      tools::ToolResult result;
      try {
        result = deps_.tools ? deps_.tools->dispatch(call)
                             : tools::ToolResult{tc.id, tc.name, std::nullopt,
                                                 tools::ToolError{ErrorCode::ToolUnavailable, "no tools configured"}};
      } catch (const Error& e) {
        result = tools::ToolResult{tc.id, tc.name, std::nullopt, tools::ToolError{e.code(), e.what()}};
      }
      auto payload = tool_event(call, result);
      emit(EventKind::ToolInvoked, payload);
      bundle.context_blocks.push_back({"tool:" + tc.id, tc.name, 0.0,
                                       result.ok() ? result.payload->dump() : payload.at("error").dump()});
    }
    response = deps_.gateway->complete(bundle);
  }
  r.draft.text = response.text;
  if (response.finish == gateway::Finish::Refused || text::trim(r.draft.text).empty()) {
    r.draft.text = offline_text(s, policy, context, chinese);
  } else {
    r.draft.bundle = bundle;
  }
  return r;
}

TurnOutcome Engine::run_turn(const DialogueState& state, const TurnInput& input) const {
  if (text::trim(input.text).empty()) fail(ErrorCode::InvalidArgument, "message text must be non-empty");
  const auto& res = *deps_.resources;
  TurnOutcome out;
  out.routing = route(state, input.text);
  auto step = advance(state, input, out.routing);
  const auto& s = step.state;

  safety::SafetyContext ctx{s.conservative(), s.safeguard.has_value(), s.worsening, step.draft.source_titles};
  out.draft_report = res.guard.check(step.draft.text, step.policy, ctx);
  out.policy = step.policy;
  out.safety_context = ctx;
  out.draft_text = step.draft.text;
  safety::Regenerator regenerate;
  if (step.draft.bundle && deps_.gateway) {
    regenerate = [&, bundle = *step.draft.bundle](const std::string& corrective) {
      auto b = bundle;
      b.history.push_back({"user", input.text});
      b.history.push_back({"assistant", step.draft.text});
      b.user_turn = corrective;
      b.tool_schemas.clear();
      return deps_.gateway->complete(b).text;
    };
  }
  out.reply = res.guard.enforce(step.draft.text, step.policy, ctx, out.draft_report, regenerate);

  json questions = json::array();
  for (const auto& q : step.draft.questions) questions.push_back(q.id);
  json violations = json::array();
  for (const auto& v : out.draft_report.violations) violations.push_back(std::string(safety::to_string(v.kind)));
  SessionEvent reply{0,
                     EventKind::ReplyEmitted,
                     deps_.clock->now_iso8601(),
                     {{"turn_index", static_cast<int>(s.transcript.size())},
                      {"text", out.reply.text},
                      {"questions", questions},
                      {"scenario", to_string(step.policy.scenario)},
                      {"stage", to_string(s.stage)},
                      {"mode", to_string(s.mode)},
                      {"instruction_version", step.policy.instruction_version},
                      {"applied_fixes", out.reply.applied_fixes},
                      {"regeneration_count", out.reply.regeneration_count},
                      {"draft_violations", violations},
                      {"sources", step.draft.source_titles}}};
  out.state = apply(s, reply);
  out.events = std::move(step.events);
  out.events.push_back(std::move(reply));
  out.questions = std::move(step.draft.questions);
  return out;
}

}  // namespace bencao::consult
