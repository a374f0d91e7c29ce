#include "bencao/consult/ledger.h"

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::consult {

int EvidenceLedger::known_count() const {
  int n = 0;
  for (const auto& e : entries_) n += e.known ? 1 : 0;
  return n;
}

std::uint8_t EvidenceLedger::unknown_mask() const {
  std::uint8_t mask = 0;
  for (int i = 0; i < kElementCount; ++i) {
    if (!entries_[i].known) mask |= static_cast<std::uint8_t>(1u << i);
  }
  return mask;
}

std::vector<DiagnosticElement> EvidenceLedger::unknown() const {
  std::vector<DiagnosticElement> out;
  for (auto e : kAllElements) {
    if (!is_known(e)) out.push_back(e);
  }
  return out;
}

namespace {

std::string normalized(const std::string& s) { return text::ascii_lower(text::trim(s)); }

}  // namespace

EvidenceLedger update_ledger(EvidenceLedger ledger, const std::vector<Finding>& findings, int turn_index) {
  for (const auto& f : findings) {
    auto& entry = ledger[f.element];
    if (!entry.known) {
      entry.known = true;
      entry.finding = f.text;
      entry.source_turn = turn_index;
      entry.confidence = f.confidence;
      continue;
    }
    entry.notes.push_back(f.text);
    if (normalized(f.text) != normalized(entry.finding)) entry.contested = true;
  }
  return ledger;
}

Rational compute_coverage(const EvidenceLedger& ledger) { return Rational(ledger.known_count(), kElementCount); }

json to_json(const EvidenceLedger& ledger) {
  json out = json::object();
  for (auto e : kAllElements) {
    const auto& entry = ledger[e];
    json j = {{"status", entry.known ? "Known" : "Unknown"}};
    if (entry.known) {
      j["finding"] = entry.finding;
      j["source_turn"] = entry.source_turn;
      j["confidence"] = entry.confidence;
      j["contested"] = entry.contested;
      j["notes"] = entry.notes;
    }
    out[std::string(to_string(e))] = j;
  }
  return out;
}

EvidenceLedger ledger_from_json(const json& j) {
  EvidenceLedger ledger;
  for (auto e : kAllElements) {
    const auto& entry = j.at(std::string(to_string(e)));
    auto status = entry.at("status").get<std::string>();
    if (status == "Unknown") continue;
    if (status != "Known") fail(ErrorCode::SchemaError, "ledger status must be Known or Unknown");
    auto& out = ledger[e];
    out.known = true;
    out.finding = entry.at("finding").get<std::string>();
    out.source_turn = entry.at("source_turn").get<int>();
    out.confidence = entry.at("confidence").get<double>();
    out.contested = entry.at("contested").get<bool>();
    out.notes = entry.at("notes").get<std::vector<std::string>>();
  }
  return ledger;
}

std::string rational_to_string(Rational r) { return r.to_string(); }

Rational rational_from_string(const std::string& s) {
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return Rational(std::stoll(s));
    return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
  } catch (const std::exception&) {
    fail(ErrorCode::SchemaError, "not a fraction: " + s);
  }
}

}  // namespace bencao::consult
