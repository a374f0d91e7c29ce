#include "support/simulated_model.h"

#include "bencao/common/text.h"

namespace bencao::testing {

SimulatedModel::SimulatedModel(std::shared_ptr<const consult::EngineResources> resources)
    : resources_(std::move(resources)) {}

namespace {

std::string section(const std::string& system, const std::string& name) {
  auto head = "## " + name + "\n";
  auto at = system.find(head);
  if (at == std::string::npos) return {};
  at += head.size();
  auto end = system.find("\n\n## ", at);
  return system.substr(at, end == std::string::npos ? std::string::npos : end - at);
}

std::string last_user(const json& request) {
  const auto& msgs = request.at("messages");
  for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
    if ((*it).at("role") == "user") return (*it).at("content").get<std::string>();
  }
  return {};
}

std::string first_source(const json& request) {
  for (const auto& m : request.at("messages")) {
    auto content = m.at("content").get<std::string>();
    auto at = content.find("[Source: ");
    if (m.at("role") == "system" && at != std::string::npos && content.rfind("Reference material:", 0) == 0) {
      auto end = content.find(']', at);
      return content.substr(at, end - at + 1);
    }
  }
  return {};
}

}  // namespace

std::optional<std::string> SimulatedModel::respond(const json& request) const {
  const auto& persona = resources_->persona;
  const auto& msgs = request.at("messages");
  std::string system = msgs.at(0).at("content").get<std::string>();
  if (request.contains("response_format")) {
    json findings = json::array();
    for (const auto& f : resources_->extractor.extract(last_user(request))) {
      findings.push_back({{"element", to_string(f.element)}, {"finding", f.text}, {"confidence", 0.9}});
    }
    return gateway::ScriptedProvider::reply_body(json{{"findings", findings}}.dump());
  }
  if (section(system, "scenario_instruction") == persona.routing_directive) {
    return gateway::ScriptedProvider::reply_body(
        json{{"scenario", to_string(routing_answer)}, {"confidence", 0.6}}.dump());
  }
  return gateway::ScriptedProvider::reply_body(chat(request));
}

std::string SimulatedModel::chat(const json& request) const {
  const auto& persona = resources_->persona;
  std::string system = request.at("messages").at(0).at("content").get<std::string>();
  std::string directive = section(system, "stage_directive");
  std::string user = last_user(request);
  bool zh = text::mostly_cjk(user);
  bool regeneration = text::starts_with(user, "Revise your previous reply");

  std::string body;
  if (text::starts_with(directive, persona.conservative_directive)) {
    body = zh ? "根据有限的信息，您可能偏向气虚体质。建议规律作息、饮食清淡温热。"
              : "From the limited information, you may lean toward a Qi-deficient constitution. Keep regular "
                "hours, eat warm simple meals and take gentle walks.";
  } else if (!persona.direct_directive.empty() && text::starts_with(directive, persona.direct_directive)) {
    body = zh ? "阴阳是中医理论的基本概念，描述相互对立又相互依存的两个方面。"
              : "Yin and Yang describe two complementary aspects that oppose and depend on each other; TCM uses "
                "them to describe balance in the body.";
  } else if (text::starts_with(directive, persona.stage_directives.at(CotStage::PatternDifferentiation))) {
    body = zh ? "从您的描述看，可能偏向寒性、气虚的倾向，仅供参考。"
              : "From what you describe, there may be a tendency toward cold and Qi deficiency. This is a tentative "
                "reading.";
  } else if (text::starts_with(directive, persona.stage_directives.at(CotStage::TreatmentPrincipleReasoning))) {
    body = zh ? "调理的总体思路是温阳益气、循序渐进。" : "The general principle would be to warm and gently "
                                                    "strengthen Qi, step by step.";
  } else {
    body = zh ? "建议规律作息，适量运动，饮食温热易消化。"
              : "Keep regular sleep hours, take gentle exercise such as tai chi, and favour warm, cooked food.";
  }
  if (always_diagnose) body += zh ? " 您患有脾虚证。" : " You are diagnosed with spleen deficiency.";
  if (prescribe_once && !regeneration && !prescribed_.exchange(true)) {
    body += zh ? " 可以用黄芪15克煎服。" : " Decoct 15g astragalus daily.";
  }
  auto source = first_source(request);
  if (!source.empty()) body += " " + source;
  // Instructions may ask for a fixed closing sentence; the model obeys.
  auto instruction = section(system, "scenario_instruction");
  const std::string marker = "End every reply with: ";
  if (auto at = instruction.find(marker); at != std::string::npos) {
    auto closing = instruction.substr(at + marker.size());
    closing = closing.substr(0, closing.find('\n'));
    body += "\n\n" + closing;
  }
  return body;
}

void SimulatedModel::install(gateway::ScriptedProvider& provider) const {
  provider.add_rule([this](const json& request) { return respond(request); });
}

std::shared_ptr<gateway::ScriptedProvider> simulated_provider(const std::shared_ptr<const SimulatedModel>& model) {
  auto p = std::make_shared<gateway::ScriptedProvider>();
  p->add_rule([model](const json& request) { return model->respond(request); });
  return p;
}

}  // namespace bencao::testing
