#include "bencao/consult/planner.h"

#include <algorithm>
#include <bit>
#include <map>
#include <set>

#include "bencao/common/error.h"

namespace bencao::consult {

std::uint8_t target_mask(const InquiryQuestion& q) {
  std::uint8_t mask = 0;
  for (auto e : q.targets) mask |= static_cast<std::uint8_t>(1u << index_of(e));
  return mask;
}

InquiryPool InquiryPool::from_json(const json& j) {
  InquiryPool pool;
  std::set<std::string> seen;
  try {
    pool.version = j.at("version").get<std::string>();
    for (const auto& q : j.at("questions")) {
      InquiryQuestion out;
      out.id = q.at("id").get<std::string>();
      out.text = scenario::localized_from(q.at("text"));
      for (const auto& t : q.at("targets")) out.targets.push_back(element_from(t.get<std::string>()));
      if (out.targets.empty()) fail(ErrorCode::SchemaError, "question " + out.id + " has no targets");
      if (!seen.insert(out.id).second) fail(ErrorCode::SchemaError, "duplicate question id " + out.id);
      pool.questions.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("inquiry pool: ") + e.what());
  }
  return pool;
}

InquiryPool InquiryPool::load(const std::string& path) { return from_json(read_json_file(path)); }

const InquiryQuestion* InquiryPool::find(const std::string& id) const {
  for (const auto& q : questions) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

std::vector<InquiryQuestion> InquiryPool::without(const std::vector<std::string>& exclude) const {
  std::vector<InquiryQuestion> out;
  for (const auto& q : questions) {
    if (std::find(exclude.begin(), exclude.end(), q.id) == exclude.end()) out.push_back(q);
  }
  return out;
}

int covered_unknown(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& questions) {
  std::uint8_t covered = 0;
  for (const auto& q : questions) covered |= target_mask(q);
  return std::popcount(static_cast<unsigned>(covered & ledger.unknown_mask()));
}

namespace {

struct Candidate {
  const InquiryQuestion* question;
  std::uint8_t mask;  // Unknown targets only
};

void check_args(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& pool, int budget) {
  if (budget < 1 || budget > kMaxQuestionBudget) {
    fail(ErrorCode::InvalidArgument, "question budget must be in [1, 5], got " + std::to_string(budget));
  }
  if (pool.empty() && ledger.unknown_mask() != 0) fail(ErrorCode::EmptyPool, "inquiry pool is empty");
}

// Relevant questions sorted by id.
std::vector<Candidate> candidates(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& pool) {
  std::vector<Candidate> out;
  for (const auto& q : pool) {
    auto m = static_cast<std::uint8_t>(target_mask(q) & ledger.unknown_mask());
    if (m != 0) out.push_back({&q, m});
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return a.question->id < b.question->id;
  });
  return out;
}

std::vector<const Candidate*> greedy(const std::vector<Candidate>& cands, int budget) {
  std::vector<const Candidate*> picked;
  std::vector<bool> used(cands.size(), false);
  std::uint8_t covered = 0;
  while (static_cast<int>(picked.size()) < budget) {
    int best = -1;
    int best_gain = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (used[i]) continue;
      int gain = std::popcount(static_cast<unsigned>(cands[i].mask & ~covered));
      if (gain > best_gain) {
        best_gain = gain;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    used[best] = true;
    covered |= cands[best].mask;
    picked.push_back(&cands[best]);
  }
  return picked;
}

int coverage_of(const std::vector<const Candidate*>& picked) {
  std::uint8_t covered = 0;
  for (const auto* c : picked) covered |= c->mask;
  return std::popcount(static_cast<unsigned>(covered));
}

// Visits subsets of exactly `size` in lexicographic index order and stops at
// the first one covering `target` elements.
bool first_subset(const std::vector<const Candidate*>& cands, int size, int target, std::size_t from,
                  std::uint8_t covered, std::vector<const Candidate*>& chosen) {
  if (static_cast<int>(chosen.size()) == size) return std::popcount(static_cast<unsigned>(covered)) == target;
  for (std::size_t i = from; i < cands.size(); ++i) {
    chosen.push_back(cands[i]);
    if (first_subset(cands, size, target, i + 1, covered | cands[i]->mask, chosen)) return true;
    chosen.pop_back();
  }
  return false;
}

std::vector<InquiryQuestion> materialize(const std::vector<const Candidate*>& picked) {
  std::vector<InquiryQuestion> out;
  out.reserve(picked.size());
  for (const auto* c : picked) out.push_back(*c->question);
  return out;
}

}  // namespace

std::vector<InquiryQuestion> greedy_plan(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& pool,
                                         int budget) {
  check_args(ledger, pool, budget);
  auto cands = candidates(ledger, pool);
  return materialize(greedy(cands, budget));
}

std::vector<InquiryQuestion> plan_inquiry(const EvidenceLedger& ledger, const std::vector<InquiryQuestion>& pool,
                                          int budget) {
  check_args(ledger, pool, budget);
  auto cands = candidates(ledger, pool);
  auto picked = greedy(cands, budget);
  int unknown = std::popcount(static_cast<unsigned>(ledger.unknown_mask()));
  int greedy_cover = coverage_of(picked);
  if (greedy_cover == unknown) return materialize(picked);

  // Questions with the same Unknown targets are interchangeable; keep the
  // lowest id of each, which also keeps the lexicographic tie-break intact.
  std::vector<const Candidate*> distinct;
  std::map<std::uint8_t, bool> seen;
  for (const auto& c : cands) {
    if (!seen[c.mask]) {
      seen[c.mask] = true;
      distinct.push_back(&c);
    }
  }

  // Best reachable coverage per subset size, by dynamic programming over the
  // 64 possible covered sets.
  int limit = std::min<int>(budget, static_cast<int>(distinct.size()));
  std::vector<bool> reach(64, false);
  reach[0] = true;
  int best = 0;
  int best_size = 0;
  for (int k = 1; k <= limit; ++k) {
    std::vector<bool> next(64, false);
    for (int s = 0; s < 64; ++s) {
      if (!reach[s]) continue;
      for (const auto* c : distinct) next[s | c->mask] = true;
    }
    reach = next;
    for (int s = 0; s < 64; ++s) {
      int pc = std::popcount(static_cast<unsigned>(s));
      if (reach[s] && pc > best) {
        best = pc;
        best_size = k;
      }
    }
  }
  if (best <= greedy_cover) return materialize(picked);

  std::vector<const Candidate*> chosen;
  first_subset(distinct, best_size, best, 0, 0, chosen);
  std::vector<Candidate> subset;
  for (const auto* c : chosen) subset.push_back(*c);
  return materialize(greedy(subset, best_size));
}

}  // namespace bencao::consult
