#include "bencao/safety/safety.h"

#include <algorithm>

#include "bencao/common/error.h"

namespace bencao::safety {

using scenario::ContentClass;
using scenario::LocalizedText;
using scenario::ScenarioPolicy;

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::DisclaimerMissing: return "DisclaimerMissing";
    case ViolationKind::ForbiddenPrescription: return "ForbiddenPrescription";
    case ViolationKind::ForbiddenDiagnosis: return "ForbiddenDiagnosis";
    case ViolationKind::MissingCitation: return "MissingCitation";
    case ViolationKind::MissingRiskAdvisory: return "MissingRiskAdvisory";
  }
  return "?";
}

bool ComplianceReport::has(ViolationKind k) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == k; });
}

json to_json(const ComplianceReport& r) {
  json arr = json::array();
  for (const auto& v : r.violations) {
    arr.push_back({{"kind", to_string(v.kind)}, {"span", {v.begin, v.end}}, {"evidence", v.evidence}});
  }
  return json{{"passed", r.passed()}, {"violations", arr}};
}

json to_json(const SafeReply& r) {
  return json{{"text", r.text}, {"applied_fixes", r.applied_fixes}, {"regeneration_count", r.regeneration_count}};
}

namespace {

// Herb names within this many bytes of a dosage count as a prescription.
constexpr std::size_t kDosageWindow = 32;

bool contains_any(std::string_view text, const LocalizedText& t) {
  for (const auto& v : t.variants()) {
    if (!v.empty() && text.find(v) != std::string_view::npos) return true;
  }
  return false;
}

std::size_t gap(const text::CueMatch& a, const text::CueMatch& b) {
  if (a.end <= b.begin) return b.begin - a.end;
  if (b.end <= a.begin) return a.begin - b.end;
  return 0;
}

bool is_sentence_end(std::string_view s, std::size_t pos) {
  char c = s[pos];
  if (c == '.' || c == '!' || c == '?' || c == '\n') return true;
  // 。！？ are three-byte sequences ending in these bytes.
  if (pos >= 2) {
    auto tail = s.substr(pos - 2, 3);
    return tail == "。" || tail == "！" || tail == "？" || tail == "；";
  }
  return false;
}

std::size_t sentence_start(std::string_view s, std::size_t pos) {
  while (pos > 0 && !is_sentence_end(s, pos - 1)) --pos;
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  return pos;
}

std::size_t sentence_end(std::string_view s, std::size_t pos) {
  while (pos < s.size()) {
    if (s[pos] == '\n') return pos;
    if (is_sentence_end(s, pos)) return pos + 1;
    ++pos;
  }
  return s.size();
}

std::vector<Violation> merge_spans(std::vector<Violation> v) {
  std::sort(v.begin(), v.end(), [](const Violation& a, const Violation& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.begin < b.begin;
  });
  std::vector<Violation> out;
  for (auto& x : v) {
    if (!out.empty() && out.back().kind == x.kind && x.begin <= out.back().end) {
      out.back().end = std::max(out.back().end, x.end);
      out.back().evidence += "; " + x.evidence;
    } else {
      out.push_back(std::move(x));
    }
  }
  return out;
}

void append_paragraph(std::string& text, const std::string& paragraph) {
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  if (!text.empty()) text += "\n\n";
  text += paragraph;
}

bool is_forbidden(ViolationKind k) {
  return k == ViolationKind::ForbiddenPrescription || k == ViolationKind::ForbiddenDiagnosis;
}

}  // namespace

SafetyGuard SafetyGuard::from_json(const json& j) {
  SafetyGuard g;
  try {
    g.lexicon_ = text::CueLexicon::from_json(j);
    g.advisory_ = scenario::localized_from(j.at("risk_advisory"));
    g.fallback_disclaimer_ = scenario::localized_from(j.at("fallback_disclaimer"));
    g.refusal_ = scenario::localized_from(j.at("refusal"));
    g.citation_template_ = scenario::localized_from(j.at("citation_template"));
    g.default_citation_title_ = j.at("default_citation_title").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("safety lexicon: ") + e.what());
  }
  for (const char* label : {"dosage", "herb", "directive", "formula", "diagnosis", "citation"}) {
    if (!g.lexicon_.has_label(label)) fail(ErrorCode::SchemaError, std::string("safety lexicon lacks ") + label);
  }
  return g;
}

SafetyGuard SafetyGuard::load(const std::string& path) { return from_json(read_json_file(path)); }

std::optional<LocalizedText> SafetyGuard::disclaimer_for(const ScenarioPolicy& policy,
                                                         const SafetyContext& ctx) const {
  if (policy.required_disclaimer) return policy.required_disclaimer;
  if (ctx.conservative || ctx.safeguard) return fallback_disclaimer_;
  return std::nullopt;
}

bool SafetyGuard::advisory_required(const ScenarioPolicy& policy, const SafetyContext& ctx) const {
  return ctx.safeguard || ctx.worsening || policy.advisory_on_worsening;
}

std::vector<Violation> SafetyGuard::forbidden_spans(std::string_view reply, const ScenarioPolicy& policy,
                                                    const SafetyContext& ctx) const {
  std::vector<text::CueMatch> dosage, herb, directive, formula, diagnosis;
  for (auto& m : lexicon_.match_every(reply)) {
    if (m.label == "dosage") dosage.push_back(m);
    else if (m.label == "herb") herb.push_back(m);
    else if (m.label == "directive") directive.push_back(m);
    else if (m.label == "formula") formula.push_back(m);
    else if (m.label == "diagnosis") diagnosis.push_back(m);
  }

  std::vector<Violation> out;
  auto add = [&](ViolationKind k, std::size_t b, std::size_t e, const std::string& ids) {
    out.push_back({k, b, e, std::string(reply.substr(b, e - b)) + " (" + ids + ")"});
  };

  bool no_rx = policy.forbids(ContentClass::PrescriptionGeneration);
  bool no_formula = no_rx || policy.forbids(ContentClass::HerbalFormulaGeneration);
  if (no_rx) {
    for (const auto& d : dosage) {
      for (const auto& h : herb) {
        if (gap(d, h) <= kDosageWindow) {
          add(ViolationKind::ForbiddenPrescription, std::min(d.begin, h.begin), std::max(d.end, h.end),
              d.cue_id + "+" + h.cue_id);
        }
      }
    }
    for (const auto& d : directive) {
      auto s0 = sentence_start(reply, d.begin);
      auto s1 = sentence_end(reply, d.begin);
      for (const auto& h : herb) {
        if (h.begin >= s0 && h.end <= s1) {
          add(ViolationKind::ForbiddenPrescription, std::min(d.begin, h.begin), std::max(d.end, h.end),
              d.cue_id + "+" + h.cue_id);
        }
      }
    }
  }
  if (no_formula) {
    for (const auto& f : formula) add(ViolationKind::ForbiddenPrescription, f.begin, f.end, f.cue_id);
  }
  if (policy.forbids(ContentClass::DefinitiveDiagnosis) || ctx.conservative) {
    for (const auto& d : diagnosis) add(ViolationKind::ForbiddenDiagnosis, d.begin, d.end, d.cue_id);
  }
  return merge_spans(std::move(out));
}

ComplianceReport SafetyGuard::check(std::string_view reply, const ScenarioPolicy& policy,
                                    const SafetyContext& ctx) const {
  ComplianceReport r;
  if (auto d = disclaimer_for(policy, ctx); d && !contains_any(reply, *d)) {
    r.violations.push_back({ViolationKind::DisclaimerMissing, reply.size(), reply.size(), d->en});
  }
  for (auto& v : forbidden_spans(reply, policy, ctx)) r.violations.push_back(std::move(v));
  if (policy.requires_citation && !lexicon_.first_match(reply, "citation")) {
    r.violations.push_back({ViolationKind::MissingCitation, reply.size(), reply.size(), ""});
  }
  if (advisory_required(policy, ctx) && !contains_any(reply, advisory_)) {
    r.violations.push_back({ViolationKind::MissingRiskAdvisory, reply.size(), reply.size(), advisory_.en});
  }
  return r;
}

std::string SafetyGuard::corrective_instruction(const ComplianceReport& report) {
  std::string s =
      "Revise your previous reply. Do not name herbal formulas, herbs with doses, preparation "
      "directions or definitive diagnoses; keep the guidance general and hedged. Offending passages:";
  for (const auto& v : report.violations) {
    if (is_forbidden(v.kind)) s += "\n- " + std::string(to_string(v.kind)) + ": " + v.evidence;
  }
  return s;
}

std::string SafetyGuard::citation_for(const SafetyContext& ctx, bool chinese) const {
  auto render = [&](const std::string& title) {
    std::string t = citation_template_.pick(chinese);
    auto at = t.find("{title}");
    if (at != std::string::npos) t.replace(at, 7, title);
    return t;
  };
  ScenarioPolicy strict;
  strict.forbidden_classes = {ContentClass::PrescriptionGeneration, ContentClass::DefinitiveDiagnosis};
  for (const auto& title : ctx.source_titles) {
    auto c = render(title);
    if (lexicon_.first_match(c, "citation") && forbidden_spans(c, strict, {}).empty()) return c;
  }
  return render(default_citation_title_);
}

SafeReply SafetyGuard::enforce(const std::string& reply, const ScenarioPolicy& policy, const SafetyContext& ctx,
                               const ComplianceReport& report, const Regenerator& regenerate) const {
  SafeReply out{reply, {}, 0};
  if (report.passed()) return out;

  auto has_forbidden = [](const ComplianceReport& r) {
    return std::any_of(r.violations.begin(), r.violations.end(),
                       [](const Violation& v) { return is_forbidden(v.kind); });
  };

  ComplianceReport current = report;
  while (has_forbidden(current) && regenerate && out.regeneration_count < kMaxRegenerations) {
    ++out.regeneration_count;
    std::string next;
    try {
      next = regenerate(corrective_instruction(current));
    } catch (const Error&) {
      out.applied_fixes.push_back("regeneration-failed");
      break;
    }
    out.text = std::move(next);
    out.applied_fixes.push_back("regenerated");
    current = check(out.text, policy, ctx);
  }

  if (has_forbidden(current)) {
    bool chinese = text::mostly_cjk(out.text);
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& v : current.violations) {
      if (!is_forbidden(v.kind)) continue;
      spans.emplace_back(sentence_start(out.text, v.begin), sentence_end(out.text, v.end > v.begin ? v.end - 1 : v.end));
      out.applied_fixes.push_back("redacted:" + std::string(to_string(v.kind)));
    }
    std::sort(spans.begin(), spans.end());
    std::vector<std::pair<std::size_t, std::size_t>> merged;
    for (auto s : spans) {
      if (!merged.empty() && s.first <= merged.back().second) {
        merged.back().second = std::max(merged.back().second, s.second);
      } else {
        merged.push_back(s);
      }
    }
    std::string redacted;
    std::size_t cursor = 0;
    for (auto [b, e] : merged) {
      redacted.append(out.text, cursor, b - cursor);
      redacted += refusal_.pick(chinese);
      cursor = e;
    }
    redacted.append(out.text, cursor, std::string::npos);
    out.text = std::move(redacted);
    current = check(out.text, policy, ctx);
  }

  bool chinese = text::mostly_cjk(out.text);
  if (current.has(ViolationKind::MissingCitation)) {
    append_paragraph(out.text, citation_for(ctx, chinese));
    out.applied_fixes.push_back("inserted:MissingCitation");
  }
  if (current.has(ViolationKind::MissingRiskAdvisory)) {
    append_paragraph(out.text, advisory_.pick(chinese));
    out.applied_fixes.push_back("inserted:MissingRiskAdvisory");
  }
  if (current.has(ViolationKind::DisclaimerMissing)) {
    append_paragraph(out.text, disclaimer_for(policy, ctx)->pick(chinese));
    out.applied_fixes.push_back("inserted:DisclaimerMissing");
  }

  if (!check(out.text, policy, ctx).passed()) {
    std::string text = refusal_.pick(chinese);
    if (policy.requires_citation) append_paragraph(text, citation_for(ctx, chinese));
    if (advisory_required(policy, ctx)) append_paragraph(text, advisory_.pick(chinese));
    if (auto d = disclaimer_for(policy, ctx)) append_paragraph(text, d->pick(chinese));
    out.text = std::move(text);
    out.applied_fixes.push_back("fallback");
  }
  return out;
}

}  // namespace bencao::safety
