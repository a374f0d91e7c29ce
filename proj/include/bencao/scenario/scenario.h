#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/common/text.h"
#include "bencao/domain.h"

namespace bencao::scenario {

// Content classes a policy may forbid; each maps onto a safety violation.
enum class ContentClass { PrescriptionGeneration, HerbalFormulaGeneration, DefinitiveDiagnosis };

std::string_view to_string(ContentClass c);
ContentClass content_class_from(std::string_view s);

// One string per language; `en` is mandatory, `zh` may be empty.
struct LocalizedText {
  std::string en;
  std::string zh;

  std::vector<std::string> variants() const;
  const std::string& pick(bool chinese) const { return chinese && !zh.empty() ? zh : en; }
  friend bool operator==(const LocalizedText&, const LocalizedText&) = default;
};

LocalizedText localized_from(const json& j);
json localized_json(const LocalizedText& t);

struct ScenarioPolicy {
  ScenarioId scenario = ScenarioId::MildDiscomfort;
  std::string instruction_text;
  std::string instruction_version;  // empty when taken from the built-in defaults
  std::optional<LocalizedText> required_disclaimer;
  bool requires_citation = false;
  std::set<ContentClass> forbidden_classes;
  int question_budget_per_round = 3;
  bool advisory_on_worsening = false;
  bool uses_inquiry = false;            // runs the ledger/inquiry loop
  std::vector<std::string> knowledge_tags;  // corpus categories to retrieve from

  bool forbids(ContentClass c) const { return forbidden_classes.count(c) > 0; }
};

json to_json(const ScenarioPolicy& p);

struct ActiveInstruction {
  std::string version_id;
  std::string text;
};

// Supplies the currently active instruction text per scenario. The feedback
// module's instruction store implements this.
class InstructionSource {
 public:
  virtual ~InstructionSource() = default;
  virtual std::optional<ActiveInstruction> active_instruction(ScenarioId scenario) const = 0;
};

class PolicyCatalog {
 public:
  static PolicyCatalog from_json(const json& j);
  static PolicyCatalog load(const std::string& path);

  // Total over the enum. Instruction text comes from `source` when it has an
  // active version, otherwise from the catalog defaults.
  ScenarioPolicy policy_for(ScenarioId scenario, const InstructionSource* source = nullptr) const;

  const std::string& version() const { return version_; }

 private:
  std::string version_;
  std::map<ScenarioId, ScenarioPolicy> policies_;
};

struct RoutingDecision {
  ScenarioId scenario = ScenarioId::MildDiscomfort;
  double confidence = 0.0;
  std::vector<std::string> rationale;  // matched cue ids, plus "llm" or "priority" on fallback
};

json to_json(const RoutingDecision& d);

// Second opinion for ambiguous turns. Returns nullopt (or throws) when it
// cannot decide.
using FallbackClassifier =
    std::function<std::optional<RoutingDecision>(const std::string& message,
                                                 const std::vector<std::string>& history)>;

// Tie order used when nothing else decides.
inline constexpr std::array<ScenarioId, 4> kScenarioPriority = {
    ScenarioId::MildDiscomfort, ScenarioId::ConstitutionTongue, ScenarioId::SeasonalWellness,
    ScenarioId::TheoryLearning};

inline constexpr double kDefaultStickiness = 0.7;

class ScenarioClassifier {
 public:
  explicit ScenarioClassifier(text::CueLexicon lexicon, FallbackClassifier fallback = {});

  static ScenarioClassifier load(const std::string& lexicon_path, FallbackClassifier fallback = {});

  // Never fails for a non-empty message; throws InvalidArgument on blank input.
  RoutingDecision classify(const std::string& message, const std::vector<std::string>& history) const;

  const text::CueLexicon& lexicon() const { return lexicon_; }
  void set_fallback(FallbackClassifier fallback) { fallback_ = std::move(fallback); }

 private:
  text::CueLexicon lexicon_;
  FallbackClassifier fallback_;
};

// Scenario to use for this turn given the session's current one. A switch
// needs confidence >= threshold.
ScenarioId resolve_sticky(std::optional<ScenarioId> current, const RoutingDecision& decision,
                          double threshold = kDefaultStickiness);

}  // namespace bencao::scenario
