#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/common/rational.h"
#include "bencao/domain.h"

namespace bencao::consult {

struct LedgerEntry {
  bool known = false;
  std::string finding;     // first finding; never overwritten
  int source_turn = -1;
  double confidence = 0.0;
  bool contested = false;  // a later finding disagreed with the first one
  std::vector<std::string> notes;
  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

class EvidenceLedger {
 public:
  const LedgerEntry& operator[](DiagnosticElement e) const { return entries_[index_of(e)]; }
  LedgerEntry& operator[](DiagnosticElement e) { return entries_[index_of(e)]; }

  bool is_known(DiagnosticElement e) const { return (*this)[e].known; }
  int known_count() const;
  // Bit i set when element i is Unknown.
  std::uint8_t unknown_mask() const;
  std::vector<DiagnosticElement> unknown() const;

  friend bool operator==(const EvidenceLedger&, const EvidenceLedger&) = default;

 private:
  std::array<LedgerEntry, kElementCount> entries_{};
};

// First write wins: a Known element keeps its finding and collects later
// texts as notes. A note that differs from the finding marks it contested.
EvidenceLedger update_ledger(EvidenceLedger ledger, const std::vector<Finding>& findings, int turn_index);

Rational compute_coverage(const EvidenceLedger& ledger);

json to_json(const EvidenceLedger& ledger);
EvidenceLedger ledger_from_json(const json& j);

std::string rational_to_string(Rational r);  // "n/d"
Rational rational_from_string(const std::string& s);

}  // namespace bencao::consult
