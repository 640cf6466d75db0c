#pragma once

// How much connotation information is lost by collapsing contexts to a
// single verb-level score, and by borrowing English scores via translation.

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "caa/error.hpp"
#include "caa/text.hpp"
#include "caa/types.hpp"

namespace caa {

struct VerbLevelScore {
  std::string verb_lemma;
  Language language;
  Dimension dimension = Dimension::Power;
  double score = 0.0;
  TernaryLabel label = TernaryLabel::Neutral;
  std::size_t n_contexts = 0;
};

namespace detail {
inline void require_aggregated(const Lexicon& lex) {
  for (const auto& inst : lex.instances)
    if (!inst.aggregate_score || !inst.label)
      throw DataError("instance '" + inst.instance_id + "' in " +
                      lexicon_name(lex.language, lex.dimension) + " is not aggregated");
}
}  // namespace detail

/// One score per verb lemma: the unweighted mean of its contexts' aggregate
/// scores, ternarized after averaging. Sorted by lemma.
inline std::vector<VerbLevelScore> decontextualize(const Lexicon& lexicon) {
  detail::require_aggregated(lexicon);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& inst : lexicon.instances) {
    auto& [sum, n] = acc[inst.verb_lemma];
    sum += *inst.aggregate_score;
    ++n;
  }
  std::vector<VerbLevelScore> out;
  out.reserve(acc.size());
  for (const auto& [lemma, sn] : acc) {
    double mean = sn.first / static_cast<double>(sn.second);
    out.push_back({lemma, lexicon.language, lexicon.dimension, mean, ternarize(mean), sn.second});
  }
  return out;
}

/// Percentage of instances whose context-level label differs from the
/// decontextualized label of their verb.
inline double context_loss(const Lexicon& lexicon) {
  auto verbs = decontextualize(lexicon);
  if (lexicon.instances.empty()) return 0.0;
  std::map<std::string, TernaryLabel> verb_label;
  for (const auto& v : verbs) verb_label.emplace(v.verb_lemma, v.label);
  std::size_t differ = 0;
  for (const auto& inst : lexicon.instances)
    if (*inst.label != verb_label.at(inst.verb_lemma)) ++differ;
  return 100.0 * static_cast<double>(differ) / static_cast<double>(lexicon.instances.size());
}

struct TranslationEntry {
  std::string source_lemma;
  Language source_language;
  std::string target_lemma;
};

/// Static verb translation table. Entries judged inaccurate are kept in
/// `rejected` and never used for lookups.
class TranslationTable {
 public:
  void add(TranslationEntry entry, bool accepted) {
    auto key = std::make_pair(entry.source_lemma, entry.source_language);
    if (!keys_.insert(key).second)
      throw DataError("duplicate translation for '" + entry.source_lemma + "' (" +
                      entry.source_language.code() + ")");
    (accepted ? entries_ : rejected_).push_back(std::move(entry));
  }

  const std::vector<TranslationEntry>& entries() const noexcept { return entries_; }
  const std::vector<TranslationEntry>& rejected() const noexcept { return rejected_; }

  std::optional<std::string> lookup(const std::string& lemma, const Language& lang) const {
    for (const auto& e : entries_)
      if (e.source_lemma == lemma && e.source_language == lang) return e.target_lemma;
    return std::nullopt;
  }

  /// Maps every lemma of `verbs` onto itself.
  static TranslationTable identity(const std::vector<VerbLevelScore>& verbs) {
    TranslationTable t;
    for (const auto& v : verbs) t.add({v.verb_lemma, v.language, v.verb_lemma}, true);
    return t;
  }

 private:
  std::set<std::pair<std::string, Language>> keys_;
  std::vector<TranslationEntry> entries_;
  std::vector<TranslationEntry> rejected_;
};

/// Columns: source_lemma, source_language, target_lemma, accepted_flag.
inline TranslationTable read_translation_table(const text::Table& table,
                                               const std::string& source = "<translations>") {
  const auto c_src = table.column("source_lemma", source);
  const auto c_lang = table.column("source_language", source);
  const auto c_tgt = table.column("target_lemma", source);
  const auto c_ok = table.column("accepted_flag", source);
  TranslationTable out;
  for (const auto& row : table.rows) {
    try {
      out.add({std::string(text::trim(row.cells[c_src])), Language(row.cells[c_lang]),
               std::string(text::trim(row.cells[c_tgt]))},
              text::parse_flag(row.cells[c_ok]));
    } catch (const Error& e) {
      throw ParseError(source, row.line, e.what());
    }
  }
  return out;
}

struct TranslationLoss {
  double percent = 0.0;
  std::size_t n_verbs = 0;
};

/// Over source verbs that have an accepted translation into an annotated
/// English verb: the percentage whose English verb-level label differs from
/// the in-language verb-level label, and the number of such verbs.
inline TranslationLoss translation_loss(const Lexicon& source_lexicon,
                                        const Lexicon& english_lexicon,
                                        const TranslationTable& table) {
  if (source_lexicon.dimension != english_lexicon.dimension)
    throw DataError("translation loss compares lexicons of different dimensions");
  auto source = decontextualize(source_lexicon);
  std::map<std::string, TernaryLabel> english;
  for (const auto& v : decontextualize(english_lexicon)) english.emplace(v.verb_lemma, v.label);

  std::size_t n = 0, differ = 0;
  for (const auto& v : source) {
    auto target = table.lookup(v.verb_lemma, v.language);
    if (!target) continue;
    auto it = english.find(*target);
    if (it == english.end()) continue;
    ++n;
    if (it->second != v.label) ++differ;
  }
  if (n == 0)
    throw DataError("no translated " + source_lexicon.language.code() +
                    " verbs overlap the English lexicon");
  return {100.0 * static_cast<double>(differ) / static_cast<double>(n), n};
}

}  // namespace caa
