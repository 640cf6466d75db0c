#pragma once

// Entity-level affect scores from model predictions on the verbs a person
// governs as subject, paired treatment-control differences, subgroup
// breakdowns and cross-language imbalance rankings.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caa/classifier.hpp"
#include "caa/corpus.hpp"
#include "caa/features.hpp"
#include "caa/matching.hpp"
#include "caa/stats.hpp"

namespace caa {

/// Dimensions scored on the corpus. Object sentiment is left out because
/// people rarely fill the object slot.
inline constexpr std::array<Dimension, 3> kScoredDimensions = {Dimension::SentSubj, Dimension::Power,
                                                               Dimension::Agency};

struct VerbSlot {
  std::size_t sentence = 0;
  std::string sentence_id;
  std::size_t verb = 0;  // 0-based token index

  bool operator==(const VerbSlot&) const = default;
};

/// Verbs the person governs as grammatical subject, one per (sentence, verb).
inline std::vector<VerbSlot> select_sentences(const Article& article, Pronoun pronoun,
                                              const DetectionOptions& opt = {}) {
  std::vector<VerbSlot> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& m : find_mentions(article, pronoun, opt)) {
    if (m.slot != Slot::Subject || !seen.insert({m.sentence, m.verb}).second) continue;
    out.push_back({m.sentence, article.sentences[m.sentence].id, m.verb});
  }
  return out;
}

inline std::string corpus_feature_key(const std::string& person_id, const Language& lang, const VerbSlot& v) {
  return person_id + "/" + lang.code() + "/" + v.sentence_id + "#" + std::to_string(v.verb);
}

struct EntityScore {
  std::string person_id;
  Language language;
  Dimension dimension = Dimension::Power;
  double mean = 0;  // mean label value in [-1, 1]
  std::size_t n_verbs = 0;

  bool operator==(const EntityScore&) const = default;
};

using ModelSet = std::map<Dimension, ConnotationModel>;

/// One score per scored dimension, or nothing when no verb was selected.
inline std::vector<EntityScore> score_entity(const std::string& person_id, const Article& article,
                                             const std::vector<VerbSlot>& slots, const ModelSet& models,
                                             const std::unordered_map<std::string, const FeatureRecord*>& features) {
  std::vector<EntityScore> out;
  if (slots.empty()) return out;
  std::vector<const FeatureRecord*> rows;
  for (const auto& v : slots) {
    auto key = corpus_feature_key(person_id, article.language, v);
    auto it = features.find(key);
    if (it == features.end()) throw DataError("no features for corpus verb '" + key + "'");
    rows.push_back(it->second);
  }
  for (auto dim : kScoredDimensions) {
    auto m = models.find(dim);
    if (m == models.end()) throw DataError("no model for dimension " + std::string(to_string(dim)));
    long sum = 0;
    for (const auto* r : rows) {
      if (r->vector.size() != m->second.dim())
        throw DataError("feature dimension of '" + r->key + "' does not match the " + std::string(to_string(dim)) + " model");
      sum += value(m->second.predict(r->vector));
    }
    out.push_back({person_id, article.language, dim, static_cast<double>(sum) / static_cast<double>(rows.size()),
                   rows.size()});
  }
  return out;
}

struct ScoreTable {
  std::vector<EntityScore> scores;

  const EntityScore* find(const std::string& id, const Language& l, Dimension d) const {
    for (const auto& s : scores)
      if (s.person_id == id && s.language == l && s.dimension == d) return &s;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Paired differences

struct DiffReport {
  std::string facet = "all";
  std::string value = "all";
  Language language;
  Dimension dimension = Dimension::Power;
  double mean_diff = 0;
  double ci_low = 0;
  double ci_high = 0;
  double t = 0;
  double p = 1;
  bool zero_variance = false;
  std::size_t n_pairs = 0;
  std::size_t total_verbs = 0;
};

inline constexpr std::size_t kDefaultMinVerbs = 280;

/// Per pair: treatment score minus control score. Pairs lacking either
/// score are dropped. `total_verbs` counts both members' verbs.
inline DiffReport diff_scores(const std::vector<MatchedPair>& pairs, const ScoreTable& scores, const Language& lang,
                              Dimension dim, std::size_t min_verbs = kDefaultMinVerbs) {
  DiffReport r;
  r.language = lang;
  r.dimension = dim;
  std::vector<double> diffs;
  for (const auto& p : pairs) {
    const auto* a = scores.find(p.treatment_id, lang, dim);
    const auto* b = scores.find(p.control_id, lang, dim);
    if (!a || !b) continue;
    diffs.push_back(a->mean - b->mean);
    r.total_verbs += a->n_verbs + b->n_verbs;
  }
  r.n_pairs = diffs.size();
  if (r.total_verbs < min_verbs)
    throw InsufficientDataError("only " + std::to_string(r.total_verbs) + " verbs (minimum " +
                                    std::to_string(min_verbs) + ")",
                                r.total_verbs);
  if (diffs.size() < 2) throw DataError("need at least two scored pairs, have " + std::to_string(diffs.size()));
  auto tt = stats::one_sample_ttest(diffs);
  r.mean_diff = tt.mean;
  r.ci_low = tt.ci_low;
  r.ci_high = tt.ci_high;
  r.t = tt.t;
  r.p = tt.p;
  r.zero_variance = tt.zero_variance;
  return r;
}

// ---------------------------------------------------------------------------
// Subgroups

struct FacetOptions {
  bool nationality = true;
  std::string home_nationality = "American";
  bool birth_year = true;
  std::vector<int> year_edges{1900, 1960};  // <1900, 1900-1960, >1960
  bool occupation = true;
  std::vector<std::string> occupation_priority{"Entertainer", "Artist"};
  std::string occupation_other = "Other";
};

/// Facet values of a treatment entry; a missing attribute yields no value.
inline std::vector<std::pair<std::string, std::string>> facet_values(const BiographyEntry& e, const FacetOptions& f) {
  std::vector<std::pair<std::string, std::string>> out;
  if (f.nationality && !e.attributes.nationality.empty()) {
    auto home = text::fold_case(f.home_nationality);
    bool is_home = false;
    for (const auto& n : e.attributes.nationality) is_home |= text::fold_case(n) == home;
    out.emplace_back("nationality", is_home ? f.home_nationality : "non-" + f.home_nationality);
  }
  if (f.birth_year && e.attributes.birth_year && !f.year_edges.empty()) {
    int y = *e.attributes.birth_year;
    const auto& edges = f.year_edges;
    std::string bin;
    if (y < edges.front()) {
      bin = "<" + std::to_string(edges.front());
    } else if (y > edges.back()) {
      bin = ">" + std::to_string(edges.back());
    } else {
      for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        if (y >= edges[i] && y <= edges[i + 1]) {
          bin = std::to_string(edges[i]) + "-" + std::to_string(edges[i + 1]);
          break;
        }
      if (bin.empty()) bin = std::to_string(edges.front());  // single edge, y equals it
    }
    out.emplace_back("birth_year", bin);
  }
  if (f.occupation && !e.attributes.occupation.empty()) {
    std::string v = f.occupation_other;
    for (const auto& want : f.occupation_priority) {
      bool hit = false;
      for (const auto& o : e.attributes.occupation) hit |= text::fold_case(o) == text::fold_case(want);
      if (hit) {
        v = want;
        break;
      }
    }
    out.emplace_back("occupation", v);
  }
  return out;
}

struct Refusal {
  std::string facet;
  std::string value;
  Language language;
  Dimension dimension = Dimension::Power;
  std::size_t n_pairs = 0;
  std::size_t total_verbs = 0;
  std::string reason;
};

struct SubgroupOutcome {
  std::vector<DiffReport> reports;
  std::vector<Refusal> refused;
};

/// The global report ("all") followed by one report per facet value, for
/// every language and scored dimension. Subgroups failing the minimums are
/// listed as refused instead.
inline SubgroupOutcome subgroup_report(const std::vector<MatchedPair>& pairs,
                                       const std::map<std::string, const BiographyEntry*>& treatment,
                                       const ScoreTable& scores, const std::vector<Language>& languages,
                                       const FacetOptions& facets = {}, std::size_t min_verbs = kDefaultMinVerbs) {
  std::map<std::pair<std::string, std::string>, std::vector<MatchedPair>> groups;
  groups[{"all", "all"}] = pairs;
  for (const auto& p : pairs) {
    auto it = treatment.find(p.treatment_id);
    if (it == treatment.end()) throw DataError("no entry for treatment '" + p.treatment_id + "'");
    for (auto& fv : facet_values(*it->second, facets)) groups[fv].push_back(p);
  }
  SubgroupOutcome out;
  auto emit = [&](const std::pair<std::string, std::string>& key, const std::vector<MatchedPair>& members) {
    for (const auto& lang : languages)
      for (auto dim : kScoredDimensions) {
        try {
          auto r = diff_scores(members, scores, lang, dim, min_verbs);
          r.facet = key.first;
          r.value = key.second;
          out.reports.push_back(r);
        } catch (const DataError& e) {
          Refusal f{key.first, key.second, lang, dim, 0, 0, e.what()};
          for (const auto& p : members) {
            const auto* a = scores.find(p.treatment_id, lang, dim);
            const auto* b = scores.find(p.control_id, lang, dim);
            if (!a || !b) continue;
            ++f.n_pairs;
            f.total_verbs += a->n_verbs + b->n_verbs;
          }
          out.refused.push_back(std::move(f));
        }
      }
  };
  emit({"all", "all"}, groups[{"all", "all"}]);
  for (const auto& [key, members] : groups)
    if (key.first != "all") emit(key, members);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-language imbalance

struct ImbalanceEntry {
  std::string person_id;
  std::string title_a, url_a, title_b, url_b;
  double score_a = 0;
  double score_b = 0;
  double diff = 0;  // score_a - score_b
};

struct ImbalanceRanking {
  Language language_a, language_b;
  Dimension dimension = Dimension::Power;
  std::vector<ImbalanceEntry> entries;
  bool truncated_request = false;  // k exceeded what was available
};

/// People scored in both languages, sorted by score(a) - score(b)
/// descending (ties by person_id), cut to the first k.
inline ImbalanceRanking rank_imbalance(const ScoreTable& scores, const std::map<std::string, const BiographyEntry*>& people,
                                       const Language& a, const Language& b, Dimension dim, std::size_t k) {
  ImbalanceRanking r{a, b, dim, {}, false};
  std::set<std::string> ids;
  for (const auto& s : scores.scores) ids.insert(s.person_id);
  for (const auto& id : ids) {
    const auto* sa = scores.find(id, a, dim);
    const auto* sb = scores.find(id, b, dim);
    if (!sa || !sb) continue;
    ImbalanceEntry e{id, "", "", "", "", sa->mean, sb->mean, sa->mean - sb->mean};
    if (auto it = people.find(id); it != people.end()) {
      if (const auto* art = it->second->article(a)) {
        e.title_a = art->title;
        e.url_a = art->url;
      }
      if (const auto* art = it->second->article(b)) {
        e.title_b = art->title;
        e.url_b = art->url;
      }
    }
    r.entries.push_back(std::move(e));
  }
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const ImbalanceEntry& x, const ImbalanceEntry& y) { return x.diff > y.diff; });
  if (k > r.entries.size()) r.truncated_request = true;
  else r.entries.resize(k);
  return r;
}

}  // namespace caa
