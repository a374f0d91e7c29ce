#pragma once

#include <string>
#include <vector>

#include "bencao/consult/ledger.h"
#include "bencao/scenario/scenario.h"

namespace bencao::consult {

struct InquiryQuestion {
  std::string id;
  scenario::LocalizedText text;
  std::vector<DiagnosticElement> targets;
  friend bool operator==(const InquiryQuestion&, const InquiryQuestion&) = default;
};

std::uint8_t target_mask(const InquiryQuestion& q);

struct InquiryPool {
  std::string version;
  std::vector<InquiryQuestion> questions;

  static InquiryPool from_json(const json& j);
  static InquiryPool load(const std::string& path);

  const InquiryQuestion* find(const std::string& id) const;
  // Questions whose ids are not in `exclude`, in file order.
  std::vector<InquiryQuestion> without(const std::vector<std::string>& exclude) const;
};

inline constexpr int kMaxQuestionBudget = 5;

// Picks at most `budget` questions that together cover as many Unknown
// elements as possible. Selection is greedy by marginal gain (lower id on
// ties) and stops at zero gain. When an exhaustive search finds a subset that
// covers more, that subset is returned instead: the smallest one, lowest ids
// first, listed in greedy order. Throws EmptyPool when the pool is empty while
// Unknown elements remain, and InvalidArgument for a budget outside [1, 5].
std::vector<InquiryQuestion> plan_inquiry(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& pool,
                                          int budget);

// The plain greedy pass, without the exhaustive correction.
std::vector<InquiryQuestion> greedy_plan(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& pool,
                                         int budget);

// Number of Unknown elements targeted by at least one question.
int covered_unknown(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& questions);

}  // namespace bencao::consult
