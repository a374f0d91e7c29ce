#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bencao/corpus/corpus.h"

namespace bencao::corpus {

struct Token {
  std::string term;
  std::size_t begin = 0;  // byte offsets into the source text
  std::size_t end = 0;
};

// Lower-cased alphanumeric runs for alphabetic scripts; CJK runs emit every
// character as a unigram plus every adjacent pair as a bigram.
std::vector<Token> tokenize(std::string_view text);

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct RetrievalHit {
  std::string doc_id;
  Span span;
  double score = 0.0;
  std::string snippet;
  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct IndexOptions {
  Bm25Params bm25;
  std::size_t max_passage_chars = 800;
};

// Immutable BM25 index over passages (blank-line separated paragraphs, split
// further when longer than max_passage_chars). Safe for concurrent readers.
class LexicalIndex {
 public:
  struct Passage {
    std::string doc_id;
    Span span;
    std::size_t length = 0;  // tokens
  };
  struct Posting {
    std::size_t passage = 0;
    std::size_t tf = 0;
  };

  static LexicalIndex build(const AttachmentRegistry& registry, const IndexOptions& options = {});

  // Postings for one (already normalized) term; empty when absent.
  const std::vector<Posting>& postings(const std::string& term) const;
  const std::vector<Passage>& passages() const { return passages_; }
  double average_length() const { return avg_length_; }
  const IndexOptions& options() const { return options_; }

  double idf(const std::string& term) const;
  double score_passage(std::size_t passage, const std::vector<std::string>& terms) const;

  // At most k hits, score descending, ties by doc_id then span start.
  std::vector<RetrievalHit> retrieve(std::string_view query, std::size_t k) const;

  // The on-disk form omits bodies; loading re-attaches them from the registry.
  json to_json() const;
  static LexicalIndex from_json(const json& j, const AttachmentRegistry& registry);

 private:
  IndexOptions options_;
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_length_ = 0.0;
  std::unordered_map<std::string, std::string> bodies_;
};

inline constexpr int kIndexFormatVersion = 1;

LexicalIndex build_index(const AttachmentRegistry& registry, const IndexOptions& options = {});
std::vector<RetrievalHit> retrieve(const LexicalIndex& index, std::string_view query, std::size_t k);

}  // namespace bencao::corpus
