#include "bencao/corpus/corpus.h"

#include <algorithm>
#include <regex>
#include <set>

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::corpus {

std::vector<StripPattern> strip_patterns_from_json(const json& j) {
  const json& list = j.is_object() ? j.at("strip_patterns") : j;
  std::vector<StripPattern> out;
  for (const auto& e : list) {
    StripPattern p;
    p.name = e.value("name", "");
    p.begin = e.value("begin", "");
    p.end = e.value("end", "");
    p.line_regex = e.value("line_regex", "");
    if (p.is_block() == p.end.empty() || (!p.is_block() && p.line_regex.empty())) {
      fail(ErrorCode::ValidationError,
           "strip pattern '" + p.name + "' needs begin+end or line_regex");
    }
    out.push_back(std::move(p));
  }
  return out;
}

json to_json(const StripPattern& p) {
  json j{{"name", p.name}};
  if (p.is_block()) {
    j["begin"] = p.begin;
    j["end"] = p.end;
  } else {
    j["line_regex"] = p.line_regex;
  }
  return j;
}

json to_json(const KnowledgeDoc& d) {
  return json{{"doc_id", d.doc_id},   {"title", d.title},
              {"category_tags", d.category_tags}, {"body", d.body},
              {"source_note", d.source_note}, {"char_count", d.char_count}};
}

KnowledgeDoc doc_from_json(const json& j) {
  KnowledgeDoc d;
  d.doc_id = j.at("doc_id").get<std::string>();
  d.title = j.at("title").get<std::string>();
  d.category_tags = j.at("category_tags").get<std::vector<std::string>>();
  d.body = j.at("body").get<std::string>();
  d.source_note = j.value("source_note", "");
  d.char_count = j.at("char_count").get<std::size_t>();
  if (d.char_count != text::utf8_length(d.body)) {
    fail(ErrorCode::ValidationError, "char_count mismatch for " + d.doc_id);
  }
  return d;
}

std::string normalize_whitespace(std::string_view raw) {
  std::vector<std::string> lines;
  std::string current;
  auto flush = [&] {
    lines.push_back(text::trim(current));
    current.clear();
  };
  bool pending_space = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\r') {
      if (i + 1 < raw.size() && raw[i + 1] == '\n') continue;
      c = '\n';
    }
    if (c == '\n') {
      pending_space = false;
      flush();
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\f' || c == '\v') {
      pending_space = true;
      continue;
    }
    if (pending_space && !current.empty()) current += ' ';
    pending_space = false;
    current += c;
  }
  flush();

  std::string out;
  bool previous_blank = true;  // swallows leading blank lines
  for (const auto& line : lines) {
    bool blank = line.empty();
    if (blank && previous_blank) continue;
    if (!out.empty()) out += '\n';
    out += line;
    previous_blank = blank;
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

namespace {

bool remove_blocks(std::string& s, const StripPattern& p) {
  bool changed = false;
  std::size_t from = 0;
  while (from < s.size()) {
    auto b = s.find(p.begin, from);
    if (b == std::string::npos) break;
    if (b != 0 && s[b - 1] != '\n') {
      from = b + 1;
      continue;
    }
    auto e = s.find(p.end, b + p.begin.size());
    if (e == std::string::npos) break;  // unterminated blocks are left alone
    s.erase(b, e + p.end.size() - b);
    changed = true;
    from = b;
  }
  return changed;
}

bool remove_lines(std::string& s, const std::regex& re) {
  auto lines = text::split_lines(s);
  std::string out;
  bool changed = false;
  bool first = true;
  for (const auto& line : lines) {
    if (std::regex_search(line, re)) {
      changed = true;
      continue;
    }
    if (!first) out += '\n';
    out += line;
    first = false;
  }
  if (changed) s = std::move(out);
  return changed;
}

}  // namespace

std::string clean_text(std::string_view raw, const std::vector<StripPattern>& patterns) {
  std::vector<std::optional<std::regex>> compiled;
  for (const auto& p : patterns) {
    if (p.is_block()) {
      compiled.emplace_back();
    } else {
      try {
        compiled.emplace_back(std::regex(p.line_regex, std::regex::ECMAScript));
      } catch (const std::regex_error& e) {
        fail(ErrorCode::ValidationError, "strip pattern '" + p.name + "': " + e.what());
      }
    }
  }
  std::string s = normalize_whitespace(raw);
  // Removing one region can splice together a new match; iterate to a fixpoint
  // so that cleaning is idempotent.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      bool hit = patterns[i].is_block() ? remove_blocks(s, patterns[i]) : remove_lines(s, *compiled[i]);
      changed = changed || hit;
    }
    if (changed) s = normalize_whitespace(s);
  }
  return s;
}

KnowledgeDoc ingest_document(std::string_view raw_text, const std::string& title,
                             const std::vector<CategoryTag>& tags,
                             const std::vector<StripPattern>& strip_patterns,
                             const std::string& source_note) {
  if (normalize_whitespace(raw_text).empty()) {
    fail(ErrorCode::InvalidArgument, "document '" + title + "' is blank");
  }
  KnowledgeDoc d;
  d.title = title;
  for (const auto& t : tags) {
    if (std::find(d.category_tags.begin(), d.category_tags.end(), t) == d.category_tags.end()) {
      d.category_tags.push_back(t);
    }
  }
  d.body = clean_text(raw_text, strip_patterns);
  if (d.body.empty()) {
    fail(ErrorCode::EmptyAfterCleaning, "document '" + title + "' is empty after cleaning");
  }
  d.char_count = text::utf8_length(d.body);
  d.source_note = source_note;
  d.doc_id = "doc-" + fnv1a64_hex(title + '\x1f' + d.body).substr(0, 12);
  return d;
}

// ---------------------------------------------------------------------------

const KnowledgeDoc* AttachmentRegistry::find_doc(const std::string& doc_id) const {
  auto it = documents.find(doc_id);
  return it == documents.end() ? nullptr : &it->second;
}

const KnowledgeDoc& AttachmentRegistry::doc(const std::string& doc_id) const {
  const auto* d = find_doc(doc_id);
  if (!d) fail(ErrorCode::NotFound, "unknown doc_id " + doc_id);
  return *d;
}

void AttachmentRegistry::validate() const {
  if (max_attachments == 0) fail(ErrorCode::ValidationError, "max_attachments must be positive");
  if (entries.size() > max_attachments) fail(ErrorCode::ValidationError, "too many entries");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].ordinal != static_cast<int>(i) + 1) {
      fail(ErrorCode::ValidationError, "ordinals must be consecutive from 1");
    }
    if (!ids.insert(entries[i].doc_id).second) {
      fail(ErrorCode::ValidationError, "duplicate doc_id " + entries[i].doc_id);
    }
    if (!documents.count(entries[i].doc_id)) {
      fail(ErrorCode::ValidationError, "entry without document: " + entries[i].doc_id);
    }
  }
  for (const auto& [tag, docs] : routing) {
    for (const auto& id : docs) {
      if (!ids.count(id)) fail(ErrorCode::ValidationError, "routing for " + tag + " names unknown " + id);
    }
  }
}

json to_json(const AttachmentRegistry& r) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back({{"ordinal", e.ordinal}, {"doc_id", e.doc_id}});
  json docs = json::array();
  for (const auto& e : r.entries) docs.push_back(to_json(r.doc(e.doc_id)));
  return json{{"format_version", kRegistryFormatVersion},
              {"max_attachments", r.max_attachments},
              {"entries", entries},
              {"routing", r.routing},
              {"documents", docs}};
}

AttachmentRegistry registry_from_json(const json& j) {
  if (j.value("format_version", 0) != kRegistryFormatVersion) {
    fail(ErrorCode::SchemaError, "unsupported registry format_version");
  }
  AttachmentRegistry r;
  r.max_attachments = j.at("max_attachments").get<std::size_t>();
  for (const auto& e : j.at("entries")) {
    r.entries.push_back({e.at("ordinal").get<int>(), e.at("doc_id").get<std::string>()});
  }
  r.routing = j.at("routing").get<std::map<std::string, std::vector<std::string>>>();
  for (const auto& d : j.at("documents")) {
    auto doc = doc_from_json(d);
    r.documents.emplace(doc.doc_id, std::move(doc));
  }
  r.validate();
  return r;
}

namespace {
constexpr std::string_view kSeparatorPrefix = "===== SOURCE: ";
constexpr std::string_view kSeparatorSuffix = " =====";

std::string slug(const std::string& s) {
  std::string out;
  for (char c : text::ascii_lower(s)) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += c;
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? fnv1a64_hex(s).substr(0, 8) : out;
}
}  // namespace

std::string separator_line(const std::string& source_title) {
  return std::string(kSeparatorPrefix) + source_title + std::string(kSeparatorSuffix);
}

bool is_separator_line(std::string_view line) {
  return line.size() >= kSeparatorPrefix.size() + kSeparatorSuffix.size() &&
         line.substr(0, kSeparatorPrefix.size()) == kSeparatorPrefix &&
         line.substr(line.size() - kSeparatorSuffix.size()) == kSeparatorSuffix;
}

AttachmentRegistry merge_documents(const std::vector<KnowledgeDoc>& docs, std::size_t max_attachments) {
  if (docs.empty()) fail(ErrorCode::InvalidArgument, "merge_documents needs at least one document");
  if (max_attachments == 0) fail(ErrorCode::InvalidArgument, "max_attachments must be positive");

  std::set<std::string> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.doc_id).second) fail(ErrorCode::DuplicateId, "duplicate doc_id " + d.doc_id);
  }

  auto primary = [](const KnowledgeDoc& d) -> std::string {
    return d.category_tags.empty() ? std::string() : d.category_tags.front();
  };

  // Groups by primary tag, in order of first appearance.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto tag = primary(docs[i]);
    if (!groups.count(tag)) group_order.push_back(tag);
    groups[tag].push_back(i);
  }
  if (group_order.size() > max_attachments) {
    fail(ErrorCode::LimitInfeasible, std::to_string(group_order.size()) +
                                         " distinct categories cannot fit in " +
                                         std::to_string(max_attachments) + " attachments");
  }

  std::set<std::string> merged_groups;
  std::size_t count = docs.size();
  if (count > max_attachments) {
    std::vector<std::string> by_size = group_order;
    std::stable_sort(by_size.begin(), by_size.end(), [&](const auto& a, const auto& b) {
      return groups[a].size() > groups[b].size();
    });
    for (const auto& tag : by_size) {
      if (count <= max_attachments) break;
      if (groups[tag].size() < 2) continue;
      merged_groups.insert(tag);
      count -= groups[tag].size() - 1;
    }
  }

  AttachmentRegistry r;
  r.max_attachments = max_attachments;
  std::set<std::string> emitted;
  auto add_entry = [&](KnowledgeDoc d) {
    r.entries.push_back({static_cast<int>(r.entries.size()) + 1, d.doc_id});
    for (const auto& tag : d.category_tags) {
      auto& route = r.routing[tag];
      if (std::find(route.begin(), route.end(), d.doc_id) == route.end()) route.push_back(d.doc_id);
    }
    r.documents.emplace(d.doc_id, std::move(d));
  };

  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto tag = primary(docs[i]);
    if (!merged_groups.count(tag)) {
      add_entry(docs[i]);
      continue;
    }
    if (emitted.count(tag)) continue;
    emitted.insert(tag);

    KnowledgeDoc merged;
    std::string base = "merged-" + slug(tag.empty() ? "untagged" : tag);
    merged.doc_id = base;
    for (int n = 2; seen.count(merged.doc_id); ++n) merged.doc_id = base + "-" + std::to_string(n);
    seen.insert(merged.doc_id);
    merged.title = "Consolidated: " + (tag.empty() ? std::string("untagged") : tag);
    std::string note = "merged from: ";
    bool first = true;
    for (auto idx : groups[tag]) {
      const auto& src = docs[idx];
      if (!first) {
        merged.body += '\n';
        note += "; ";
      }
      merged.body += separator_line(src.title);
      merged.body += '\n';
      merged.body += src.body;
      note += src.title;
      first = false;
      for (const auto& t : src.category_tags) {
        if (std::find(merged.category_tags.begin(), merged.category_tags.end(), t) ==
            merged.category_tags.end()) {
          merged.category_tags.push_back(t);
        }
      }
    }
    merged.source_note = note;
    merged.char_count = text::utf8_length(merged.body);
    add_entry(std::move(merged));
  }
  r.validate();
  return r;
}

std::vector<std::string> route_category(const AttachmentRegistry& registry, const CategoryTag& tag) {
  auto it = registry.routing.find(tag);
  return it == registry.routing.end() ? std::vector<std::string>{} : it->second;
}

}  // namespace bencao::corpus
