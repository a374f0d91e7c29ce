#include "bencao/common/text.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "bencao/common/error.h"

namespace bencao::text {

char32_t next_codepoint(std::string_view s, std::size_t& pos) {
  auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  unsigned char c = byte(pos);
  int extra = 0;
  char32_t cp = 0;
  if (c < 0x80) {
    ++pos;
    return c;
  } else if ((c & 0xE0) == 0xC0) {
    extra = 1;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    extra = 2;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    extra = 3;
    cp = c & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + extra >= s.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (int i = 1; i <= extra; ++i) {
    if ((byte(pos + i) & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (byte(pos + i) & 0x3F);
  }
  pos += extra + 1;
  return cp;
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF);
}

bool contains_cjk(std::string_view s) {
  for (std::size_t pos = 0; pos < s.size();) {
    if (is_cjk(next_codepoint(s, pos))) return true;
  }
  return false;
}

bool mostly_cjk(std::string_view s) {
  std::size_t cjk = 0, latin = 0;
  for (std::size_t pos = 0; pos < s.size();) {
    char32_t cp = next_codepoint(s, pos);
    if (is_cjk(cp)) {
      ++cjk;
    } else if (cp < 0x80 && std::isalpha(static_cast<int>(cp))) {
      ++latin;
    }
  }
  // A CJK character carries roughly a word; compare against latin words.
  return cjk > 0 && cjk * 4 > latin;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < s.size(); ++n) next_codepoint(s, pos);
  return n;
}

std::size_t utf8_offset(std::string_view s, std::size_t n) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n && pos < s.size(); ++i) next_codepoint(s, pos);
  return pos;
}

std::size_t utf8_floor(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return s.size();
  while (pos > 0 && (static_cast<unsigned char>(s[pos]) & 0xC0) == 0x80) --pos;
  return pos;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

std::string trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(s.substr(start));
      break;
    }
    lines.emplace_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

namespace {
constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                      (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                      static_cast<unsigned char>(bytes[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                      (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view encoded) {
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : encoded) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    auto idx = kB64.find(c);
    if (idx == std::string_view::npos) {
      fail(ErrorCode::InvalidArgument, "invalid base64 character");
    }
    acc = (acc << 6) | static_cast<std::uint32_t>(idx);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

bool is_word_byte(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

CueLexicon CueLexicon::from_json(const nlohmann::json& j) {
  CueLexicon lex;
  lex.version_ = j.value("version", "");
  const auto& cues = j.at("cues");
  for (auto it = cues.begin(); it != cues.end(); ++it) {
    int n = 0;
    for (const auto& entry : it.value()) {
      Cue cue;
      if (entry.is_string()) {
        cue.pattern = entry.get<std::string>();
        cue.id = it.key() + "#" + std::to_string(n);
      } else {
        cue.pattern = entry.at("pattern").get<std::string>();
        cue.id = entry.value("id", it.key() + "#" + std::to_string(n));
        cue.regex = entry.value("regex", false);
      }
      lex.add(it.key(), std::move(cue));
      ++n;
    }
  }
  return lex;
}

CueLexicon CueLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open lexicon " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaError, "lexicon " + path + ": " + e.what());
  }
}

void CueLexicon::add(const std::string& label, Cue cue) {
  if (!cues_.count(label)) order_.push_back(label);
  CompiledCue compiled{cue, ascii_lower(cue.pattern), std::nullopt};
  // Regex cues are authored in lower case; lowering the pattern would turn \S into \s.
  if (cue.regex) compiled.re.emplace(cue.pattern, std::regex::ECMAScript);
  cues_[label].push_back(std::move(compiled));
}

std::vector<std::string> CueLexicon::labels() const { return order_; }

std::optional<std::pair<std::size_t, std::size_t>> CueLexicon::find(const CompiledCue& c,
                                                                   std::string_view lowered,
                                                                   std::size_t from) {
  if (from > lowered.size()) return std::nullopt;
  if (c.re) {
    std::match_results<std::string_view::const_iterator> m;
    auto flags = from > 0 ? std::regex_constants::match_prev_avail : std::regex_constants::match_default;
    if (std::regex_search(lowered.begin() + from, lowered.end(), m, *c.re, flags)) {
      auto b = from + static_cast<std::size_t>(m.position(0));
      return std::make_pair(b, b + static_cast<std::size_t>(m.length(0)));
    }
    return std::nullopt;
  }
  const std::string& p = c.lowered;
  if (p.empty()) return std::nullopt;
  bool word_bounded = is_ascii(p);
  while (true) {
    auto at = lowered.find(p, from);
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t end = at + p.size();
    bool ok = true;
    if (word_bounded) {
      if (is_word_byte(p.front()) && at > 0 && is_word_byte(lowered[at - 1])) ok = false;
      if (is_word_byte(p.back()) && end < lowered.size() && is_word_byte(lowered[end])) ok = false;
    }
    if (ok) return std::make_pair(at, end);
    from = at + 1;
  }
}

std::vector<CueMatch> CueLexicon::match_every(std::string_view text) const {
  std::string lowered = ascii_lower(text);
  std::vector<CueMatch> out;
  for (const auto& label : order_) {
    for (const auto& c : cues_.at(label)) {
      std::size_t from = 0;
      while (auto span = find(c, lowered, from)) {
        out.push_back({label, c.cue.id, span->first, span->second});
        from = span->second > span->first ? span->second : span->first + 1;
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CueMatch& a, const CueMatch& b) { return a.begin < b.begin; });
  return out;
}

std::vector<CueMatch> CueLexicon::match_all(std::string_view text) const {
  std::string lowered = ascii_lower(text);
  std::vector<CueMatch> out;
  for (const auto& label : order_) {
    for (const auto& c : cues_.at(label)) {
      if (auto span = find(c, lowered)) {
        out.push_back({label, c.cue.id, span->first, span->second});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CueMatch& a, const CueMatch& b) { return a.begin < b.begin; });
  return out;
}

std::optional<CueMatch> CueLexicon::first_match(std::string_view text, const std::string& label) const {
  auto it = cues_.find(label);
  if (it == cues_.end()) return std::nullopt;
  std::string lowered = ascii_lower(text);
  std::optional<CueMatch> best;
  for (const auto& c : it->second) {
    if (auto span = find(c, lowered)) {
      if (!best || span->first < best->begin) best = CueMatch{label, c.cue.id, span->first, span->second};
    }
  }
  return best;
}

}  // namespace bencao::text
