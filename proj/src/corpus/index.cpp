#include "bencao/corpus/index.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::corpus {
namespace {

bool is_separator_cp(char32_t cp) {
  if (cp < 0x80) return !std::isalnum(static_cast<int>(cp));
  return (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F) ||
         (cp >= 0xFF00 && cp <= 0xFFEF) || cp == 0x00A0 || cp == 0xFFFD ||
         (cp >= 0x00A1 && cp <= 0x00BF) || cp == 0x00D7 || cp == 0x00F7;
}

}  // namespace

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t word_begin = std::string_view::npos;
  // Previous CJK character in the current run, for bigrams.
  std::size_t prev_cjk_begin = std::string_view::npos;

  auto close_word = [&](std::size_t end) {
    if (word_begin != std::string_view::npos) {
      out.push_back({text::ascii_lower(s.substr(word_begin, end - word_begin)), word_begin, end});
      word_begin = std::string_view::npos;
    }
  };

  for (std::size_t pos = 0; pos < s.size();) {
    std::size_t begin = pos;
    char32_t cp = text::next_codepoint(s, pos);
    if (text::is_cjk(cp)) {
      close_word(begin);
      out.push_back({std::string(s.substr(begin, pos - begin)), begin, pos});
      if (prev_cjk_begin != std::string_view::npos) {
        out.push_back({std::string(s.substr(prev_cjk_begin, pos - prev_cjk_begin)), prev_cjk_begin, pos});
      }
      prev_cjk_begin = begin;
      continue;
    }
    prev_cjk_begin = std::string_view::npos;
    if (is_separator_cp(cp)) {
      close_word(begin);
    } else if (word_begin == std::string_view::npos) {
      word_begin = begin;
    }
  }
  close_word(s.size());
  return out;
}

namespace {

// Splits a body into passages: paragraphs, with long ones cut at line
// boundaries (or at code points when a single line is too long).
std::vector<Span> split_passages(std::string_view body, std::size_t max_chars) {
  std::vector<Span> paragraphs;
  std::size_t start = 0;
  while (start < body.size()) {
    auto gap = body.find("\n\n", start);
    std::size_t end = gap == std::string_view::npos ? body.size() : gap;
    if (end > start) paragraphs.push_back({start, end});
    if (gap == std::string_view::npos) break;
    start = gap + 2;
  }

  std::vector<Span> out;
  for (auto p : paragraphs) {
    std::size_t begin = p.begin;
    while (begin < p.end) {
      std::string_view rest = body.substr(begin, p.end - begin);
      if (text::utf8_length(rest) <= max_chars) {
        out.push_back({begin, p.end});
        break;
      }
      std::size_t hard = begin + text::utf8_offset(rest, max_chars);
      auto nl = body.rfind('\n', hard);
      std::size_t cut = (nl != std::string_view::npos && nl > begin) ? nl : hard;
      out.push_back({begin, cut});
      begin = (cut < p.end && body[cut] == '\n') ? cut + 1 : cut;
    }
  }
  return out;
}

const std::vector<LexicalIndex::Posting> kNoPostings;

std::vector<std::string> query_terms(std::string_view query) {
  std::vector<std::string> terms;
  std::set<std::string> seen;
  for (auto& t : tokenize(query)) {
    if (seen.insert(t.term).second) terms.push_back(std::move(t.term));
  }
  return terms;
}

}  // namespace

LexicalIndex LexicalIndex::build(const AttachmentRegistry& registry, const IndexOptions& options) {
  if (registry.entries.empty()) fail(ErrorCode::InvalidArgument, "cannot index an empty registry");
  if (options.max_passage_chars == 0) fail(ErrorCode::InvalidArgument, "max_passage_chars must be positive");
  LexicalIndex idx;
  idx.options_ = options;
  std::size_t total = 0;
  for (const auto& entry : registry.entries) {
    const auto& doc = registry.doc(entry.doc_id);
    idx.bodies_[doc.doc_id] = doc.body;
    for (auto span : split_passages(doc.body, options.max_passage_chars)) {
      auto tokens = tokenize(std::string_view(doc.body).substr(span.begin, span.end - span.begin));
      if (tokens.empty()) continue;
      std::size_t passage_id = idx.passages_.size();
      idx.passages_.push_back({doc.doc_id, span, tokens.size()});
      total += tokens.size();
      std::map<std::string, std::size_t> tf;
      for (const auto& t : tokens) ++tf[t.term];
      for (const auto& [term, n] : tf) idx.postings_[term].push_back({passage_id, n});
    }
  }
  idx.avg_length_ = idx.passages_.empty() ? 0.0 : static_cast<double>(total) / idx.passages_.size();
  return idx;
}

const std::vector<LexicalIndex::Posting>& LexicalIndex::postings(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? kNoPostings : it->second;
}

double LexicalIndex::idf(const std::string& term) const {
  double n = static_cast<double>(passages_.size());
  double df = static_cast<double>(postings(term).size());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double LexicalIndex::score_passage(std::size_t passage, const std::vector<std::string>& terms) const {
  const auto& p = passages_.at(passage);
  const auto& bm = options_.bm25;
  double norm = bm.k1 * (1.0 - bm.b + bm.b * static_cast<double>(p.length) / avg_length_);
  double score = 0.0;
  for (const auto& term : terms) {
    const auto& list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), passage,
                               [](const Posting& a, std::size_t v) { return a.passage < v; });
    if (it == list.end() || it->passage != passage) continue;
    double tf = static_cast<double>(it->tf);
    score += idf(term) * tf * (bm.k1 + 1.0) / (tf + norm);
  }
  return score;
}

std::vector<RetrievalHit> LexicalIndex::retrieve(std::string_view query, std::size_t k) const {
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be at least 1");
  auto terms = query_terms(query);
  std::set<std::size_t> candidates;
  for (const auto& t : terms) {
    for (const auto& p : postings(t)) candidates.insert(p.passage);
  }
  std::vector<RetrievalHit> hits;
  hits.reserve(candidates.size());
  for (auto id : candidates) {
    const auto& p = passages_[id];
    const auto& body = bodies_.at(p.doc_id);
    hits.push_back({p.doc_id, p.span, score_passage(id, terms),
                    body.substr(p.span.begin, p.span.end - p.span.begin)});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.span.begin < b.span.begin;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

json LexicalIndex::to_json() const {
  json passages = json::array();
  for (const auto& p : passages_) {
    passages.push_back({p.doc_id, p.span.begin, p.span.end, p.length});
  }
  // Sorted for byte-stable output.
  std::map<std::string, json> postings;
  for (const auto& [term, list] : postings_) {
    json arr = json::array();
    for (const auto& p : list) arr.push_back({p.passage, p.tf});
    postings[term] = std::move(arr);
  }
  return json{{"format_version", kIndexFormatVersion},
              {"k1", options_.bm25.k1},
              {"b", options_.bm25.b},
              {"max_passage_chars", options_.max_passage_chars},
              {"avg_length", avg_length_},
              {"passages", passages},
              {"postings", postings}};
}

LexicalIndex LexicalIndex::from_json(const json& j, const AttachmentRegistry& registry) {
  if (j.value("format_version", 0) != kIndexFormatVersion) {
    fail(ErrorCode::SchemaError, "unsupported index format_version");
  }
  LexicalIndex idx;
  idx.options_.bm25.k1 = j.at("k1").get<double>();
  idx.options_.bm25.b = j.at("b").get<double>();
  idx.options_.max_passage_chars = j.at("max_passage_chars").get<std::size_t>();
  idx.avg_length_ = j.at("avg_length").get<double>();
  for (const auto& p : j.at("passages")) {
    Passage passage{p.at(0).get<std::string>(), {p.at(1).get<std::size_t>(), p.at(2).get<std::size_t>()},
                    p.at(3).get<std::size_t>()};
    const auto& body = registry.doc(passage.doc_id).body;
    if (passage.span.end > body.size() || passage.span.begin > passage.span.end) {
      fail(ErrorCode::SchemaError, "index passage out of range for " + passage.doc_id);
    }
    idx.bodies_.emplace(passage.doc_id, body);
    idx.passages_.push_back(std::move(passage));
  }
  for (const auto& [term, arr] : j.at("postings").items()) {
    auto& list = idx.postings_[term];
    for (const auto& p : arr) list.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
  }
  return idx;
}

LexicalIndex build_index(const AttachmentRegistry& registry, const IndexOptions& options) {
  return LexicalIndex::build(registry, options);
}

std::vector<RetrievalHit> retrieve(const LexicalIndex& index, std::string_view query, std::size_t k) {
  return index.retrieve(query, k);
}

}  // namespace bencao::corpus
