#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/common/text.h"
#include "bencao/scenario/scenario.h"

namespace bencao::safety {

enum class ViolationKind {
  DisclaimerMissing,
  ForbiddenPrescription,
  ForbiddenDiagnosis,
  MissingCitation,
  MissingRiskAdvisory
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind = ViolationKind::DisclaimerMissing;
  std::size_t begin = 0;  // byte span into the reply; empty for missing-content kinds
  std::size_t end = 0;
  std::string evidence;   // matched text, or the cue ids involved
};

struct ComplianceReport {
  std::vector<Violation> violations;
  bool passed() const { return violations.empty(); }
  bool has(ViolationKind k) const;
};

json to_json(const ComplianceReport& r);

// Session facts that change what a reply must contain.
struct SafetyContext {
  bool conservative = false;  // conservative compliant mode
  bool safeguard = false;     // an uncertainty safeguard has fired
  bool worsening = false;     // the user reported worsening symptoms
  std::vector<std::string> source_titles;  // knowledge sources retrieved for this turn
};

struct SafeReply {
  std::string text;
  std::vector<std::string> applied_fixes;
  int regeneration_count = 0;
};

json to_json(const SafeReply& r);

// Receives a corrective instruction and returns a fresh draft.
using Regenerator = std::function<std::string(const std::string& corrective_instruction)>;

inline constexpr int kMaxRegenerations = 2;

class SafetyGuard {
 public:
  static SafetyGuard from_json(const json& j);
  static SafetyGuard load(const std::string& path);

  ComplianceReport check(std::string_view reply, const scenario::ScenarioPolicy& policy,
                         const SafetyContext& ctx) const;

  // Repairs a reply until check passes. `report` must come from check on the
  // same reply, policy and context.
  SafeReply enforce(const std::string& reply, const scenario::ScenarioPolicy& policy, const SafetyContext& ctx,
                    const ComplianceReport& report, const Regenerator& regenerate = {}) const;

  SafeReply enforce(const std::string& reply, const scenario::ScenarioPolicy& policy, const SafetyContext& ctx,
                    const Regenerator& regenerate = {}) const {
    return enforce(reply, policy, ctx, check(reply, policy, ctx), regenerate);
  }

  // Disclaimer that applies under this policy and context, if any.
  std::optional<scenario::LocalizedText> disclaimer_for(const scenario::ScenarioPolicy& policy,
                                                        const SafetyContext& ctx) const;
  bool advisory_required(const scenario::ScenarioPolicy& policy, const SafetyContext& ctx) const;

  const scenario::LocalizedText& risk_advisory() const { return advisory_; }
  const scenario::LocalizedText& refusal() const { return refusal_; }
  const std::string& version() const { return lexicon_.version(); }

  static std::string corrective_instruction(const ComplianceReport& report);

 private:
  std::vector<Violation> forbidden_spans(std::string_view reply, const scenario::ScenarioPolicy& policy,
                                         const SafetyContext& ctx) const;
  std::string citation_for(const SafetyContext& ctx, bool chinese) const;

  text::CueLexicon lexicon_;
  scenario::LocalizedText advisory_;
  scenario::LocalizedText fallback_disclaimer_;
  scenario::LocalizedText refusal_;
  scenario::LocalizedText citation_template_;
  std::string default_citation_title_;
};

}  // namespace bencao::safety
