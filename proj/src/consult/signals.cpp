#include "bencao/consult/signals.h"

#include <set>

#include "bencao/common/error.h"

namespace bencao::consult {

SafeguardDetector::SafeguardDetector(text::CueLexicon lexicon) : lexicon_(std::move(lexicon)) {
  for (auto k : kSafeguardPriority) {
    if (!lexicon_.has_label(std::string(to_string(k)))) {
      fail(ErrorCode::SchemaError, "safeguard lexicon lacks " + std::string(to_string(k)));
    }
  }
}

SafeguardDetector SafeguardDetector::load(const std::string& path) {
  return SafeguardDetector(text::CueLexicon::load(path));
}

std::optional<SafeguardTrigger> SafeguardDetector::detect(std::string_view turn_text,
                                                          const std::vector<Finding>& findings) const {
  std::vector<std::string_view> texts = {turn_text};
  for (const auto& f : findings) texts.push_back(f.text);
  for (auto kind : kSafeguardPriority) {
    auto label = std::string(to_string(kind));
    for (auto t : texts) {
      if (auto m = lexicon_.first_match(t, label)) {
        return SafeguardTrigger{kind, std::string(t.substr(m->begin, m->end - m->begin))};
      }
    }
  }
  return std::nullopt;
}

DialogueCues::DialogueCues(text::CueLexicon lexicon) : lexicon_(std::move(lexicon)) {
  for (const char* label : {"decline", "worsening"}) {
    if (!lexicon_.has_label(label)) fail(ErrorCode::SchemaError, std::string("dialogue cues lack ") + label);
  }
}

DialogueCues DialogueCues::load(const std::string& path) { return DialogueCues(text::CueLexicon::load(path)); }

bool DialogueCues::declined(std::string_view text) const {
  return lexicon_.first_match(text, "decline").has_value();
}

bool DialogueCues::worsening(std::string_view text) const {
  return lexicon_.first_match(text, "worsening").has_value();
}

RuleExtractor::RuleExtractor(text::CueLexicon lexicon) : lexicon_(std::move(lexicon)) {
  for (const auto& label : lexicon_.labels()) {
    if (!parse_element(label)) fail(ErrorCode::SchemaError, "finding cue label is not an element: " + label);
  }
}

RuleExtractor RuleExtractor::load(const std::string& path) { return RuleExtractor(text::CueLexicon::load(path)); }

std::vector<Finding> RuleExtractor::extract(std::string_view text) const {
  std::vector<Finding> out;
  std::set<std::string> seen;
  for (const auto& m : lexicon_.match_all(text)) {
    if (!seen.insert(m.label).second) continue;
    out.push_back({element_from(m.label), std::string(text.substr(m.begin, m.end - m.begin)), 1.0});
  }
  return out;
}

}  // namespace bencao::consult
