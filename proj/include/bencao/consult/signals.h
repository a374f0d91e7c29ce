#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bencao/common/text.h"
#include "bencao/domain.h"

namespace bencao::consult {

struct SafeguardTrigger {
  SafeguardKind kind = SafeguardKind::AcuteSevere;
  std::string evidence;  // the matched text
  friend bool operator==(const SafeguardTrigger&, const SafeguardTrigger&) = default;
};

// Bilingual cue lists for the four safeguard triggers.
class SafeguardDetector {
 public:
  explicit SafeguardDetector(text::CueLexicon lexicon);
  static SafeguardDetector load(const std::string& path);

  // Highest-priority trigger found in the turn text or in any finding text.
  std::optional<SafeguardTrigger> detect(std::string_view turn_text, const std::vector<Finding>& findings = {}) const;

 private:
  text::CueLexicon lexicon_;
};

// Explicit refusals to answer, and reports of worsening symptoms.
class DialogueCues {
 public:
  explicit DialogueCues(text::CueLexicon lexicon);
  static DialogueCues load(const std::string& path);

  bool declined(std::string_view text) const;
  bool worsening(std::string_view text) const;

 private:
  text::CueLexicon lexicon_;
};

// Offline finding extractor: the first cue hit per element, in text order.
class RuleExtractor {
 public:
  explicit RuleExtractor(text::CueLexicon lexicon);
  static RuleExtractor load(const std::string& path);

  std::vector<Finding> extract(std::string_view text) const;
  const text::CueLexicon& lexicon() const { return lexicon_; }

 private:
  text::CueLexicon lexicon_;
};

}  // namespace bencao::consult
