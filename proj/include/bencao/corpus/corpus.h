#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/io.h"

namespace bencao::corpus {

// Query categories used for attachment routing ("FundamentalTheory",
// "TongueDiagnosis", ...). Open vocabulary, compared verbatim.
using CategoryTag = std::string;

// A region to drop during cleaning. Either a block delimited by a begin
// marker (which must start a line) and an end marker, removed inclusively,
// or a single-line regex removing every whole line it matches.
struct StripPattern {
  std::string name;
  std::string begin;
  std::string end;
  std::string line_regex;

  bool is_block() const { return !begin.empty(); }
  friend bool operator==(const StripPattern&, const StripPattern&) = default;
};

std::vector<StripPattern> strip_patterns_from_json(const json& j);
json to_json(const StripPattern& p);

struct KnowledgeDoc {
  std::string doc_id;
  std::string title;
  std::vector<CategoryTag> category_tags;  // ordered, duplicates removed
  std::string body;
  std::string source_note;
  std::size_t char_count = 0;  // code points in body

  friend bool operator==(const KnowledgeDoc&, const KnowledgeDoc&) = default;
};

json to_json(const KnowledgeDoc& d);
KnowledgeDoc doc_from_json(const json& j);

// CRLF folding, per-line trimming, horizontal-whitespace collapsing,
// at most one blank line in a row, no leading/trailing blank lines.
std::string normalize_whitespace(std::string_view raw);

// Removes every strip-pattern region until none remains, then normalizes.
std::string clean_text(std::string_view raw, const std::vector<StripPattern>& patterns);

// Throws InvalidArgument when `raw_text` is blank and EmptyAfterCleaning
// when cleaning leaves nothing.
KnowledgeDoc ingest_document(std::string_view raw_text, const std::string& title,
                             const std::vector<CategoryTag>& tags,
                             const std::vector<StripPattern>& strip_patterns,
                             const std::string& source_note = {});

inline constexpr std::size_t kDefaultMaxAttachments = 20;

struct AttachmentEntry {
  int ordinal = 0;
  std::string doc_id;
  friend bool operator==(const AttachmentEntry&, const AttachmentEntry&) = default;
};

struct AttachmentRegistry {
  std::vector<AttachmentEntry> entries;
  std::map<CategoryTag, std::vector<std::string>> routing;
  std::size_t max_attachments = kDefaultMaxAttachments;
  std::map<std::string, KnowledgeDoc> documents;  // by doc_id

  const KnowledgeDoc& doc(const std::string& doc_id) const;
  const KnowledgeDoc* find_doc(const std::string& doc_id) const;
  // Throws ValidationError naming the first broken invariant.
  void validate() const;

  friend bool operator==(const AttachmentRegistry&, const AttachmentRegistry&) = default;
};

inline constexpr int kRegistryFormatVersion = 1;
json to_json(const AttachmentRegistry& r);
AttachmentRegistry registry_from_json(const json& j);

// Line inserted before each source inside a consolidated attachment.
std::string separator_line(const std::string& source_title);
bool is_separator_line(std::string_view line);

// Consolidates documents by primary (first-listed) tag until at most
// `max_attachments` entries remain. Largest groups are merged first; the
// entry order follows the first appearance of each unit in `docs`.
AttachmentRegistry merge_documents(const std::vector<KnowledgeDoc>& docs, std::size_t max_attachments);

// Empty when the tag has no routing entry.
std::vector<std::string> route_category(const AttachmentRegistry& registry, const CategoryTag& tag);

}  // namespace bencao::corpus
