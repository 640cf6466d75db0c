#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caa/error.hpp"
#include "caa/text.hpp"

namespace caa {

/// The four connotation-frame dimensions.
enum class Dimension { Power, Agency, SentSubj, SentObj };

inline constexpr std::array<Dimension, 4> kAllDimensions = {
    Dimension::Power, Dimension::Agency, Dimension::SentSubj, Dimension::SentObj};

inline std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::Power: return "power";
    case Dimension::Agency: return "agency";
    case Dimension::SentSubj: return "sent_subj";
    case Dimension::SentObj: return "sent_obj";
  }
  return "?";
}

/// Accepts the canonical names plus common spellings ("Sent(subj)", "sentsubj").
inline Dimension parse_dimension(std::string_view s) {
  std::string key;
  for (char c : text::fold_case(text::trim(s)))
    if (c != '_' && c != '(' && c != ')' && c != ' ' && c != '-') key += c;
  if (key == "power" || key == "pow") return Dimension::Power;
  if (key == "agency" || key == "agen") return Dimension::Agency;
  if (key == "sentsubj" || key == "sentimentsubj" || key == "ssubj") return Dimension::SentSubj;
  if (key == "sentobj" || key == "sentimentobj" || key == "sobj") return Dimension::SentObj;
  throw Error("unknown dimension '" + std::string(s) + "'");
}

/// ISO 639-1 language code; always two lowercase ASCII letters.
class Language {
 public:
  Language() = default;
  explicit Language(std::string_view code) : code_(text::fold_case(text::trim(code))) {
    if (code_.size() != 2 || code_[0] < 'a' || code_[0] > 'z' || code_[1] < 'a' || code_[1] > 'z')
      throw Error("invalid language code '" + std::string(code) + "'");
  }

  const std::string& code() const noexcept { return code_; }
  bool empty() const noexcept { return code_.empty(); }

  friend bool operator==(const Language&, const Language&) = default;
  friend auto operator<=>(const Language&, const Language&) = default;

 private:
  std::string code_;
};

enum class TernaryLabel : int { Negative = -1, Neutral = 0, Positive = 1 };

inline constexpr std::array<TernaryLabel, 3> kAllLabels = {
    TernaryLabel::Negative, TernaryLabel::Neutral, TernaryLabel::Positive};

inline int value(TernaryLabel l) { return static_cast<int>(l); }

/// Class index used by the classifier: Negative=0, Neutral=1, Positive=2.
inline int class_index(TernaryLabel l) { return static_cast<int>(l) + 1; }
inline TernaryLabel label_from_class(int idx) {
  if (idx < 0 || idx > 2) throw Error("class index out of range: " + std::to_string(idx));
  return static_cast<TernaryLabel>(idx - 1);
}
inline TernaryLabel label_from_value(int v) {
  if (v < -1 || v > 1) throw Error("label value out of range: " + std::to_string(v));
  return static_cast<TernaryLabel>(v);
}

inline std::string_view to_string(TernaryLabel l) {
  switch (l) {
    case TernaryLabel::Negative: return "negative";
    case TernaryLabel::Neutral: return "neutral";
    case TernaryLabel::Positive: return "positive";
  }
  return "?";
}

inline constexpr double kPolarThreshold = 0.35;

/// Closed polar intervals: [0.35, 1] is Positive and [-1, -0.35] Negative.
inline TernaryLabel ternarize(double score) {
  if (score >= kPolarThreshold) return TernaryLabel::Positive;
  if (score <= -kPolarThreshold) return TernaryLabel::Negative;
  return TernaryLabel::Neutral;
}

struct Judgement {
  std::string annotator_id;
  int value = 0;  // -1, 0 or +1

  friend bool operator==(const Judgement&, const Judgement&) = default;
};

/// One verb-in-context item for one dimension, with its raw judgements.
/// `instance_id` names the (verb, context) item and is shared by the four
/// dimension tasks over the same context.
struct ConnotationInstance {
  std::string instance_id;
  std::string verb_lemma;
  std::string context_sentence;
  std::size_t verb_token_index = 0;
  Language language;
  Dimension dimension = Dimension::Power;
  std::vector<Judgement> judgements;
  std::optional<double> aggregate_score;
  std::optional<TernaryLabel> label;

  friend bool operator==(const ConnotationInstance&, const ConnotationInstance&) = default;
};

struct Lexicon {
  Language language;
  Dimension dimension = Dimension::Power;
  std::vector<ConnotationInstance> instances;
  std::string provenance;

  friend bool operator==(const Lexicon&, const Lexicon&) = default;
};

inline std::string lexicon_name(const Language& lang, Dimension dim) {
  return lang.code() + "-" + std::string(to_string(dim));
}

}  // namespace caa
