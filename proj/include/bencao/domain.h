#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

// Closed vocabularies shared across modules. Each enum has a stable wire
// name used in JSON files, events and the HTTP API.
namespace bencao {

enum class ScenarioId { TheoryLearning, MildDiscomfort, ConstitutionTongue, SeasonalWellness };
inline constexpr std::array<ScenarioId, 4> kAllScenarios = {
    ScenarioId::TheoryLearning, ScenarioId::MildDiscomfort, ScenarioId::ConstitutionTongue,
    ScenarioId::SeasonalWellness};

// The six core diagnostic elements whose Known-fraction is coverage.
// Qi, Blood and Fluids are tracked separately.
enum class DiagnosticElement { ColdHeat, DeficiencyExcess, InteriorExterior, Qi, Blood, Fluids };
inline constexpr std::array<DiagnosticElement, 6> kAllElements = {
    DiagnosticElement::ColdHeat, DiagnosticElement::DeficiencyExcess,
    DiagnosticElement::InteriorExterior, DiagnosticElement::Qi,
    DiagnosticElement::Blood, DiagnosticElement::Fluids};
inline constexpr int kElementCount = 6;

enum class CotStage {
  SymptomRecognition,
  PatternDifferentiation,
  TreatmentPrincipleReasoning,
  LifestyleRecommendation
};

enum class ModeKind { Normal, ConservativeCompliant, Safeguard };

enum class SafeguardKind { AcuteSevere, Pregnancy, Pediatric, ChronicDisease };
// Detection priority, highest first.
inline constexpr std::array<SafeguardKind, 4> kSafeguardPriority = {
    SafeguardKind::AcuteSevere, SafeguardKind::Pregnancy, SafeguardKind::Pediatric,
    SafeguardKind::ChronicDisease};

enum class TerminationReason { UserDeclined, SufficientCoverage, DiminishingGain };

std::string_view to_string(ScenarioId v);
std::string_view to_string(DiagnosticElement v);
std::string_view to_string(CotStage v);
std::string_view to_string(ModeKind v);
std::string_view to_string(SafeguardKind v);
std::string_view to_string(TerminationReason v);

std::optional<ScenarioId> parse_scenario(std::string_view s);
std::optional<DiagnosticElement> parse_element(std::string_view s);
std::optional<CotStage> parse_stage(std::string_view s);
std::optional<ModeKind> parse_mode(std::string_view s);
std::optional<SafeguardKind> parse_safeguard(std::string_view s);
std::optional<TerminationReason> parse_termination(std::string_view s);

// Throwing variants for trusted inputs (persisted logs, data files).
ScenarioId scenario_from(std::string_view s);
DiagnosticElement element_from(std::string_view s);
CotStage stage_from(std::string_view s);
ModeKind mode_from(std::string_view s);
SafeguardKind safeguard_from(std::string_view s);
TerminationReason termination_from(std::string_view s);

inline constexpr int index_of(DiagnosticElement e) { return static_cast<int>(e); }

// One extracted observation about a diagnostic element.
struct Finding {
  DiagnosticElement element = DiagnosticElement::ColdHeat;
  std::string text;
  double confidence = 1.0;
  friend bool operator==(const Finding&, const Finding&) = default;
};

}  // namespace bencao
