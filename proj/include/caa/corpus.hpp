#pragma once

// Biography corpus: JSON-lines dump reader, pronoun inference, detection
// of sentences where the person fills a subject or object slot, entry
// filtering and (subject, verb, object) tuple extraction.

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caa/conllu.hpp"
#include "caa/error.hpp"
#include "caa/text.hpp"
#include "caa/types.hpp"

namespace caa {

enum class Group { Treatment, Candidate };

inline std::string_view to_string(Group g) { return g == Group::Treatment ? "treatment" : "candidate"; }

struct Attributes {
  std::vector<std::string> nationality;
  std::optional<int> birth_year;
  std::vector<std::string> occupation;

  bool operator==(const Attributes&) const = default;
};

struct Article {
  Language language;
  std::vector<std::string> names;  // first entry is the display name
  std::string title;
  std::string url;
  std::vector<conllu::Sentence> sentences;
};

struct BiographyEntry {
  std::string person_id;
  Group group = Group::Treatment;
  std::map<Language, Article> articles;
  std::vector<std::string> categories;  // merged over languages, sorted, unique
  Attributes attributes;

  const Article* article(const Language& l) const {
    auto it = articles.find(l);
    return it == articles.end() ? nullptr : &it->second;
  }
};

// ---------------------------------------------------------------------------
// Dump reader

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* field) {
  std::vector<std::string> out;
  if (!j.contains(field) || j.at(field).is_null()) return out;
  const auto& v = j.at(field);
  if (v.is_string()) return {v.get<std::string>()};
  for (const auto& s : v) out.push_back(s.get<std::string>());
  return out;
}

inline void merge_unique(std::vector<std::string>& into, const std::vector<std::string>& more) {
  into.insert(into.end(), more.begin(), more.end());
  std::sort(into.begin(), into.end());
  into.erase(std::unique(into.begin(), into.end()), into.end());
}

}  // namespace detail

/// One JSON object per line and per (person, language). Fields:
/// person_id, language, group ("treatment" | "candidate"), names, title,
/// url, categories, attributes {nationality, birth_year, occupation},
/// conllu. Entries come back sorted by person_id.
inline std::vector<BiographyEntry> read_corpus(std::istream& in, const std::string& source = "<corpus>") {
  std::map<std::string, BiographyEntry> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("person_id").get<std::string>();
      if (id.empty()) throw ParseError(source, line_no, "empty person_id");
      Language lang(j.at("language").get<std::string>());
      auto group_s = j.at("group").get<std::string>();
      Group group;
      if (group_s == "treatment") group = Group::Treatment;
      else if (group_s == "candidate") group = Group::Candidate;
      else throw ParseError(source, line_no, "unknown group '" + group_s + "'");

      auto [it, fresh] = by_id.try_emplace(id);
      auto& e = it->second;
      if (fresh) {
        e.person_id = id;
        e.group = group;
      } else if (e.group != group) {
        throw ParseError(source, line_no, "person '" + id + "' appears in both groups");
      }
      if (e.articles.count(lang))
        throw ParseError(source, line_no, "duplicate " + lang.code() + " article for '" + id + "'");

      Article a;
      a.language = lang;
      a.names = detail::string_list(j, "names");
      a.title = j.value("title", std::string());
      a.url = j.value("url", std::string());
      if (a.names.empty() && !a.title.empty()) a.names.push_back(a.title);
      a.sentences = conllu::read_string(j.value("conllu", std::string()),
                                        source + ":" + std::to_string(line_no));
      detail::merge_unique(e.categories, detail::string_list(j, "categories"));

      if (j.contains("attributes")) {
        const auto& at = j.at("attributes");
        detail::merge_unique(e.attributes.nationality, detail::string_list(at, "nationality"));
        detail::merge_unique(e.attributes.occupation, detail::string_list(at, "occupation"));
        if (at.contains("birth_year") && !at.at("birth_year").is_null()) {
          int year = at.at("birth_year").get<int>();
          if (e.attributes.birth_year && *e.attributes.birth_year != year)
            throw ParseError(source, line_no, "conflicting birth_year for '" + id + "'");
          e.attributes.birth_year = year;
        }
      }
      e.articles.emplace(lang, std::move(a));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(source, line_no, ex.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& ex) {
      throw ParseError(source, line_no, ex.what());
    }
  }
  std::vector<BiographyEntry> out;
  for (auto& [id, e] : by_id) out.push_back(std::move(e));
  return out;
}

inline std::vector<BiographyEntry> read_corpus_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus dump " + path);
  return read_corpus(in, path);
}

/// One entry per line; blank lines and lines starting with '#' ignored.
inline std::set<std::string> read_word_list(std::istream& in, bool fold = true) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.insert(fold ? text::fold_case(t) : std::string(t));
  }
  return out;
}

inline std::set<std::string> read_word_list_file(const std::string& path, bool fold = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open word list " + path);
  return read_word_list(in, fold);
}

// ---------------------------------------------------------------------------
// Pronouns

enum class Pronoun { He, She, Unresolved };

inline std::string_view to_string(Pronoun p) {
  switch (p) {
    case Pronoun::He: return "he";
    case Pronoun::She: return "she";
    default: return "unresolved";
  }
}

struct PronounSet {
  std::set<std::string> he;
  std::set<std::string> she;
};

using PronounSets = std::map<Language, PronounSet>;

inline PronounSets default_pronoun_sets() {
  return {{Language("en"), {{"he"}, {"she"}}},
          {Language("es"), {{"él"}, {"ella"}}},
          {Language("ru"), {{"он"}, {"она"}}}};
}

/// The more frequent of the he/she token sets in the article; ties
/// (including no hits) are unresolved.
inline Pronoun infer_pronoun(const Article& article, const PronounSets& sets) {
  auto it = sets.find(article.language);
  if (it == sets.end()) return Pronoun::Unresolved;
  std::size_t he = 0, she = 0;
  for (const auto& s : article.sentences)
    for (const auto& t : s.tokens) {
      auto f = text::fold_case(t.form);
      he += it->second.he.count(f);
      she += it->second.she.count(f);
    }
  if (he > she) return Pronoun::He;
  if (she > he) return Pronoun::She;
  return Pronoun::Unresolved;
}

// ---------------------------------------------------------------------------
// Mentions

enum class Slot { Subject, Object };

struct DetectionOptions {
  std::set<std::string> subject_relations{"nsubj"};
  std::set<std::string> object_relations{"obj", "dobj"};
  bool match_surname = true;
  PronounSets pronouns = default_pronoun_sets();
  std::size_t min_sentences = 3;
};

struct Mention {
  std::size_t sentence = 0;  // index into Article::sentences
  std::size_t token = 0;     // head token of the person span
  std::size_t verb = 0;      // governing verb token
  Slot slot = Slot::Subject;

  auto operator<=>(const Mention&) const = default;
};

namespace detail {

inline std::vector<std::vector<std::string>> name_patterns(const Article& a, bool surname) {
  std::set<std::vector<std::string>> pats;
  for (const auto& n : a.names) {
    std::vector<std::string> toks;
    for (auto& p : text::split(n, ' '))
      if (!text::trim(p).empty()) toks.push_back(text::fold_case(text::trim(p)));
    if (toks.empty()) continue;
    pats.insert(toks);
    if (surname) pats.insert({toks.back()});
  }
  return {pats.begin(), pats.end()};
}

// Token of [lo, hi) whose head lies outside the span.
inline std::size_t span_head(const conllu::Sentence& s, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) {
    int h = s.head_index(i);
    if (h < static_cast<int>(lo) || h >= static_cast<int>(hi)) return i;
  }
  return lo;
}

}  // namespace detail

/// Every place where the person (by name, surname or resolved pronoun)
/// fills a subject or object slot of a VERB, sorted and deduplicated.
inline std::vector<Mention> find_mentions(const Article& article, Pronoun pronoun, const DetectionOptions& opt) {
  auto patterns = detail::name_patterns(article, opt.match_surname);
  std::set<std::string> pron;
  if (pronoun != Pronoun::Unresolved) {
    auto it = opt.pronouns.find(article.language);
    if (it != opt.pronouns.end()) pron = pronoun == Pronoun::He ? it->second.he : it->second.she;
  }
  std::set<Mention> found;
  for (std::size_t si = 0; si < article.sentences.size(); ++si) {
    const auto& s = article.sentences[si];
    std::vector<std::string> folded;
    for (const auto& t : s.tokens) folded.push_back(text::fold_case(t.form));
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& p : patterns)
      for (std::size_t i = 0; i + p.size() <= folded.size(); ++i)
        if (std::equal(p.begin(), p.end(), folded.begin() + static_cast<std::ptrdiff_t>(i)))
          spans.emplace_back(i, i + p.size());
    for (std::size_t i = 0; i < folded.size(); ++i)
      if (pron.count(folded[i])) spans.emplace_back(i, i + 1);
    for (auto [lo, hi] : spans) {
      auto head = detail::span_head(s, lo, hi);
      int verb = s.head_index(head);
      if (verb < 0 || s.tokens[static_cast<std::size_t>(verb)].upos != "VERB") continue;
      const auto& rel = s.tokens[head].deprel;
      std::optional<Slot> slot;
      if (opt.subject_relations.count(rel)) slot = Slot::Subject;
      else if (opt.object_relations.count(rel)) slot = Slot::Object;
      if (slot) found.insert({si, head, static_cast<std::size_t>(verb), *slot});
    }
  }
  return {found.begin(), found.end()};
}

inline std::size_t count_analyzable_sentences(const std::vector<Mention>& mentions) {
  std::set<std::size_t> s;
  for (const auto& m : mentions) s.insert(m.sentence);
  return s.size();
}

struct FilterDecision {
  std::string person_id;
  bool kept = false;
  std::string reason;  // empty when kept
  std::map<Language, std::size_t> analyzable;
  std::map<Language, Pronoun> pronouns;
};

struct FilterOutcome {
  std::vector<BiographyEntry> kept;
  std::vector<FilterDecision> decisions;  // one per input entry, input order
};

/// Keeps entries with an article in every language and at least
/// `min_sentences` analyzable sentences in each.
inline FilterOutcome filter_entries(std::vector<BiographyEntry> entries, const std::vector<Language>& languages,
                                    const DetectionOptions& opt = {}) {
  FilterOutcome out;
  for (auto& e : entries) {
    FilterDecision d;
    d.person_id = e.person_id;
    d.kept = true;
    for (const auto& lang : languages) {
      const auto* a = e.article(lang);
      if (!a) {
        d.kept = false;
        if (d.reason.empty()) d.reason = "no " + lang.code() + " article";
        continue;
      }
      auto p = infer_pronoun(*a, opt.pronouns);
      auto n = count_analyzable_sentences(find_mentions(*a, p, opt));
      d.pronouns[lang] = p;
      d.analyzable[lang] = n;
      if (n < opt.min_sentences) {
        if (d.reason.empty())
          d.reason = std::to_string(n) + " analyzable " + lang.code() + " sentences";
        d.kept = false;
      }
    }
    if (d.kept) out.kept.push_back(std::move(e));
    out.decisions.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate (subject, verb, object) tuples

struct SovTuple {
  std::string subject;
  std::string verb;
  std::string object;
  std::size_t frequency = 0;
  std::vector<std::string> samples;

  bool operator==(const SovTuple&) const = default;
};

struct TupleOptions {
  std::size_t k_verbs = 300;
  std::size_t k_contexts = 3;
  std::size_t n_samples = 3;
  std::set<std::string> subject_relations{"nsubj"};
  std::set<std::string> object_relations{"obj", "dobj"};
};

/// Ranks transitive verbs (a VERB with both a subject and an object
/// dependent) by occurrence count, keeps the top k_verbs, and per verb the
/// k_contexts most frequent tuples with a person noun in either slot.
/// Ties break on the lemmas. Samples are the first sentences in corpus order.
inline std::vector<SovTuple> extract_candidate_tuples(const std::vector<conllu::Sentence>& corpus,
                                                      const std::set<std::string>& person_nouns,
                                                      const TupleOptions& opt = {}) {
  struct Key {
    std::string s, o;
    auto operator<=>(const Key&) const = default;
  };
  std::map<std::string, std::size_t> verb_freq;
  std::map<std::string, std::map<Key, SovTuple>> tuples;
  for (const auto& sent : corpus) {
    for (const auto& t : sent.tokens)
      if (t.deprel.empty() || t.deprel == "_")
        throw DataError("sentence '" + sent.id + "' has no dependency relations; the corpus is not parsed");
    for (std::size_t v = 0; v < sent.tokens.size(); ++v) {
      if (sent.tokens[v].upos != "VERB") continue;
      std::vector<std::size_t> subj, obj;
      for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
        if (sent.head_index(i) != static_cast<int>(v)) continue;
        if (opt.subject_relations.count(sent.tokens[i].deprel)) subj.push_back(i);
        else if (opt.object_relations.count(sent.tokens[i].deprel)) obj.push_back(i);
      }
      if (subj.empty() || obj.empty()) continue;
      const auto& verb = sent.tokens[v].lemma;
      ++verb_freq[verb];
      for (auto si : subj)
        for (auto oi : obj) {
          auto sl = text::fold_case(sent.tokens[si].lemma), ol = text::fold_case(sent.tokens[oi].lemma);
          if (!person_nouns.count(sl) && !person_nouns.count(ol)) continue;
          auto& tup = tuples[verb][{sl, ol}];
          if (tup.frequency == 0) {
            tup.subject = sl;
            tup.verb = verb;
            tup.object = ol;
          }
          ++tup.frequency;
          if (tup.samples.size() < opt.n_samples &&
              (tup.samples.empty() || tup.samples.back() != sent.text))
            tup.samples.push_back(sent.text);
        }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(verb_freq.begin(), verb_freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > opt.k_verbs) ranked.resize(opt.k_verbs);

  std::vector<SovTuple> out;
  for (const auto& [verb, freq] : ranked) {
    auto it = tuples.find(verb);
    if (it == tuples.end()) continue;
    std::vector<SovTuple> ts;
    for (auto& [k, t] : it->second) ts.push_back(t);
    std::stable_sort(ts.begin(), ts.end(), [](const auto& a, const auto& b) { return a.frequency > b.frequency; });
    if (ts.size() > opt.k_contexts) ts.resize(opt.k_contexts);
    out.insert(out.end(), ts.begin(), ts.end());
  }
  return out;
}

}  // namespace caa
