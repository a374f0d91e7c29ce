#include "bencao/domain.h"

#include <string>

#include "bencao/common/error.h"

namespace bencao {
namespace {

template <typename E, std::size_t N>
struct Names {
  std::array<std::pair<E, std::string_view>, N> entries;

  std::string_view name(E v) const {
    for (const auto& [e, n] : entries) {
      if (e == v) return n;
    }
    return "?";
  }
  std::optional<E> parse(std::string_view s) const {
    for (const auto& [e, n] : entries) {
      if (n == s) return e;
    }
    return std::nullopt;
  }
};

constexpr Names<ScenarioId, 4> kScenarioNames{{{
    {ScenarioId::TheoryLearning, "TheoryLearning"},
    {ScenarioId::MildDiscomfort, "MildDiscomfort"},
    {ScenarioId::ConstitutionTongue, "ConstitutionTongue"},
    {ScenarioId::SeasonalWellness, "SeasonalWellness"},
}}};

constexpr Names<DiagnosticElement, 6> kElementNames{{{
    {DiagnosticElement::ColdHeat, "ColdHeat"},
    {DiagnosticElement::DeficiencyExcess, "DeficiencyExcess"},
    {DiagnosticElement::InteriorExterior, "InteriorExterior"},
    {DiagnosticElement::Qi, "Qi"},
    {DiagnosticElement::Blood, "Blood"},
    {DiagnosticElement::Fluids, "Fluids"},
}}};

constexpr Names<CotStage, 4> kStageNames{{{
    {CotStage::SymptomRecognition, "SymptomRecognition"},
    {CotStage::PatternDifferentiation, "PatternDifferentiation"},
    {CotStage::TreatmentPrincipleReasoning, "TreatmentPrincipleReasoning"},
    {CotStage::LifestyleRecommendation, "LifestyleRecommendation"},
}}};

constexpr Names<ModeKind, 3> kModeNames{{{
    {ModeKind::Normal, "Normal"},
    {ModeKind::ConservativeCompliant, "ConservativeCompliant"},
    {ModeKind::Safeguard, "Safeguard"},
}}};

constexpr Names<SafeguardKind, 4> kSafeguardNames{{{
    {SafeguardKind::AcuteSevere, "AcuteSevere"},
    {SafeguardKind::Pregnancy, "Pregnancy"},
    {SafeguardKind::Pediatric, "Pediatric"},
    {SafeguardKind::ChronicDisease, "ChronicDisease"},
}}};

constexpr Names<TerminationReason, 3> kTerminationNames{{{
    {TerminationReason::UserDeclined, "UserDeclined"},
    {TerminationReason::SufficientCoverage, "SufficientCoverage"},
    {TerminationReason::DiminishingGain, "DiminishingGain"},
}}};

template <typename E>
E require(std::optional<E> v, std::string_view what, std::string_view s) {
  if (!v) fail(ErrorCode::ValidationError, "unknown " + std::string(what) + " '" + std::string(s) + "'");
  return *v;
}

}  // namespace

std::string_view to_string(ScenarioId v) { return kScenarioNames.name(v); }
std::string_view to_string(DiagnosticElement v) { return kElementNames.name(v); }
std::string_view to_string(CotStage v) { return kStageNames.name(v); }
std::string_view to_string(ModeKind v) { return kModeNames.name(v); }
std::string_view to_string(SafeguardKind v) { return kSafeguardNames.name(v); }
std::string_view to_string(TerminationReason v) { return kTerminationNames.name(v); }

std::optional<ScenarioId> parse_scenario(std::string_view s) { return kScenarioNames.parse(s); }
std::optional<DiagnosticElement> parse_element(std::string_view s) { return kElementNames.parse(s); }
std::optional<CotStage> parse_stage(std::string_view s) { return kStageNames.parse(s); }
std::optional<ModeKind> parse_mode(std::string_view s) { return kModeNames.parse(s); }
std::optional<SafeguardKind> parse_safeguard(std::string_view s) { return kSafeguardNames.parse(s); }
std::optional<TerminationReason> parse_termination(std::string_view s) { return kTerminationNames.parse(s); }

ScenarioId scenario_from(std::string_view s) { return require(parse_scenario(s), "scenario", s); }
DiagnosticElement element_from(std::string_view s) { return require(parse_element(s), "element", s); }
CotStage stage_from(std::string_view s) { return require(parse_stage(s), "stage", s); }
ModeKind mode_from(std::string_view s) { return require(parse_mode(s), "mode", s); }
SafeguardKind safeguard_from(std::string_view s) { return require(parse_safeguard(s), "safeguard", s); }
TerminationReason termination_from(std::string_view s) { return require(parse_termination(s), "termination reason", s); }

}  // namespace bencao
