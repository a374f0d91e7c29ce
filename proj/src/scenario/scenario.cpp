#include "bencao/scenario/scenario.h"

#include <algorithm>

#include "bencao/common/error.h"

namespace bencao::scenario {

std::string_view to_string(ContentClass c) {
  switch (c) {
    case ContentClass::PrescriptionGeneration: return "PrescriptionGeneration";
    case ContentClass::HerbalFormulaGeneration: return "HerbalFormulaGeneration";
    case ContentClass::DefinitiveDiagnosis: return "DefinitiveDiagnosis";
  }
  return "?";
}

ContentClass content_class_from(std::string_view s) {
  for (auto c : {ContentClass::PrescriptionGeneration, ContentClass::HerbalFormulaGeneration,
                 ContentClass::DefinitiveDiagnosis}) {
    if (to_string(c) == s) return c;
  }
  fail(ErrorCode::ValidationError, "unknown content class: " + std::string(s));
}

std::vector<std::string> LocalizedText::variants() const {
  std::vector<std::string> out{en};
  if (!zh.empty()) out.push_back(zh);
  return out;
}

LocalizedText localized_from(const json& j) {
  LocalizedText t;
  t.en = j.at("en").get<std::string>();
  t.zh = j.value("zh", std::string{});
  if (t.en.empty()) fail(ErrorCode::SchemaError, "localized text needs an English variant");
  return t;
}

json localized_json(const LocalizedText& t) { return json{{"en", t.en}, {"zh", t.zh}}; }

json to_json(const ScenarioPolicy& p) {
  json forbidden = json::array();
  for (auto c : p.forbidden_classes) forbidden.push_back(to_string(c));
  return json{{"scenario", to_string(p.scenario)},
              {"instruction_text", p.instruction_text},
              {"instruction_version", p.instruction_version},
              {"required_disclaimer",
               p.required_disclaimer ? localized_json(*p.required_disclaimer) : json(nullptr)},
              {"requires_citation", p.requires_citation},
              {"forbidden_classes", forbidden},
              {"question_budget_per_round", p.question_budget_per_round},
              {"advisory_on_worsening", p.advisory_on_worsening},
              {"uses_inquiry", p.uses_inquiry},
              {"knowledge_tags", p.knowledge_tags}};
}

PolicyCatalog PolicyCatalog::from_json(const json& j) {
  PolicyCatalog cat;
  try {
    cat.version_ = j.value("version", std::string{});
    const auto& policies = j.at("policies");
    for (auto s : kAllScenarios) {
      const auto& pj = policies.at(std::string(to_string(s)));
      ScenarioPolicy p;
      p.scenario = s;
      p.instruction_text = pj.at("instruction_text").get<std::string>();
      if (!pj.at("required_disclaimer").is_null()) {
        p.required_disclaimer = localized_from(pj.at("required_disclaimer"));
      }
      p.requires_citation = pj.at("requires_citation").get<bool>();
      for (const auto& c : pj.at("forbidden_classes")) {
        p.forbidden_classes.insert(content_class_from(c.get<std::string>()));
      }
      p.question_budget_per_round = pj.value("question_budget_per_round", 3);
      p.advisory_on_worsening = pj.value("advisory_on_worsening", false);
      p.uses_inquiry = pj.value("uses_inquiry", false);
      p.knowledge_tags = pj.value("knowledge_tags", std::vector<std::string>{});
      if (p.question_budget_per_round < 1 || p.question_budget_per_round > 5) {
        fail(ErrorCode::SchemaError, "question_budget_per_round must be in [1,5]");
      }
      if (!p.forbids(ContentClass::PrescriptionGeneration)) {
        fail(ErrorCode::SchemaError,
             "policy for " + std::string(to_string(s)) + " must forbid PrescriptionGeneration");
      }
      cat.policies_.emplace(s, std::move(p));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("policy catalog: ") + e.what());
  }
  return cat;
}

PolicyCatalog PolicyCatalog::load(const std::string& path) { return from_json(read_json_file(path)); }

ScenarioPolicy PolicyCatalog::policy_for(ScenarioId scenario, const InstructionSource* source) const {
  ScenarioPolicy p = policies_.at(scenario);
  if (source) {
    if (auto active = source->active_instruction(scenario)) {
      p.instruction_text = active->text;
      p.instruction_version = active->version_id;
    }
  }
  return p;
}

json to_json(const RoutingDecision& d) {
  return json{{"scenario", to_string(d.scenario)}, {"confidence", d.confidence}, {"rationale", d.rationale}};
}

ScenarioClassifier::ScenarioClassifier(text::CueLexicon lexicon, FallbackClassifier fallback)
    : lexicon_(std::move(lexicon)), fallback_(std::move(fallback)) {
  for (const auto& label : lexicon_.labels()) {
    if (!parse_scenario(label)) fail(ErrorCode::SchemaError, "cue lexicon has unknown scenario " + label);
  }
}

ScenarioClassifier ScenarioClassifier::load(const std::string& lexicon_path, FallbackClassifier fallback) {
  return ScenarioClassifier(text::CueLexicon::load(lexicon_path), std::move(fallback));
}

RoutingDecision ScenarioClassifier::classify(const std::string& message,
                                             const std::vector<std::string>& history) const {
  if (text::trim(message).empty()) fail(ErrorCode::InvalidArgument, "message must be non-empty");

  std::set<ScenarioId> matched;
  std::vector<std::string> cue_ids;
  for (const auto& m : lexicon_.match_all(message)) {
    matched.insert(scenario_from(m.label));
    if (std::find(cue_ids.begin(), cue_ids.end(), m.cue_id) == cue_ids.end()) cue_ids.push_back(m.cue_id);
  }
  if (matched.size() == 1) return {*matched.begin(), 1.0, cue_ids};

  if (fallback_) {
    try {
      if (auto d = fallback_(message, history)) {
        d->confidence = std::clamp(d->confidence, 0.0, 1.0);
        auto rationale = cue_ids;
        rationale.push_back("llm");
        d->rationale = std::move(rationale);
        return *d;
      }
    } catch (const Error&) {
      // fall through to the priority order
    }
  }

  cue_ids.push_back("priority");
  for (auto s : kScenarioPriority) {
    if (matched.empty() || matched.count(s)) return {s, matched.empty() ? 0.0 : 0.5, cue_ids};
  }
  return {kScenarioPriority.front(), 0.0, cue_ids};
}

ScenarioId resolve_sticky(std::optional<ScenarioId> current, const RoutingDecision& decision,
                          double threshold) {
  if (!current || decision.scenario == *current) return decision.scenario;
  return decision.confidence >= threshold ? decision.scenario : *current;
}

}  // namespace bencao::scenario
