#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace bencao::text {

// Decodes one UTF-8 code point starting at `pos` and advances `pos`.
// Invalid bytes decode as U+FFFD and advance by one byte.
char32_t next_codepoint(std::string_view s, std::size_t& pos);

bool is_cjk(char32_t cp);
bool contains_cjk(std::string_view s);
// True when more than half of the letters are CJK ideographs.
bool mostly_cjk(std::string_view s);

std::size_t utf8_length(std::string_view s);
// Byte offset of the `n`-th code point (or s.size()).
std::size_t utf8_offset(std::string_view s, std::size_t n);
// Moves `pos` backwards to the start of the code point that contains it.
std::size_t utf8_floor(std::string_view s, std::size_t pos);

std::string ascii_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view encoded);

// A cue is either a literal phrase or an ECMAScript regex. ASCII phrases
// match case-insensitively on word boundaries; phrases containing non-ASCII
// text match as plain substrings, which is what Chinese text needs.
struct Cue {
  std::string id;
  std::string pattern;
  bool regex = false;
};

struct CueMatch {
  std::string label;
  std::string cue_id;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Label -> cues, loaded from the bilingual JSON data files:
//   { "version": "...", "cues": { "<label>": [ "phrase" | {"id","pattern","regex"} ] } }
class CueLexicon {
 public:
  CueLexicon() = default;

  static CueLexicon from_json(const nlohmann::json& j);
  static CueLexicon load(const std::string& path);

  void add(const std::string& label, Cue cue);

  const std::string& version() const { return version_; }
  std::vector<std::string> labels() const;
  bool has_label(const std::string& label) const { return cues_.count(label) > 0; }

  // Every match for every label, ordered by (begin, label, cue order).
  std::vector<CueMatch> match_all(std::string_view text) const;
  // Like match_all, but reports every occurrence of every cue.
  std::vector<CueMatch> match_every(std::string_view text) const;
  // First match (lowest offset) for one label.
  std::optional<CueMatch> first_match(std::string_view text, const std::string& label) const;

 private:
  struct CompiledCue {
    Cue cue;
    std::string lowered;
    std::optional<std::regex> re;
  };
  static std::optional<std::pair<std::size_t, std::size_t>> find(const CompiledCue& c,
                                                                 std::string_view lowered,
                                                                 std::size_t from = 0);

  std::string version_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<CompiledCue>> cues_;
};

}  // namespace bencao::text
