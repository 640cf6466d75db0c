#pragma once

// Control matching on category profiles: TF-IDF category vectors with
// pivoted length normalization, greedy matching without replacement, and
// slope tuning against the category-count gap.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caa/corpus.hpp"
#include "caa/error.hpp"

namespace caa {

struct CategoryVector {
  std::string person_id;
  std::map<std::string, double> weights;  // zero weights omitted
  std::size_t n_categories = 0;           // after exclusion
  double divisor = 1.0;

  bool operator==(const CategoryVector&) const = default;
};

struct CategoryVectors {
  double pivot = 0;
  double slope = 0;
  std::vector<CategoryVector> vectors;  // input order

  const CategoryVector& at(const std::string& id) const {
    for (const auto& v : vectors)
      if (v.person_id == id) return v;
    throw DataError("no category vector for '" + id + "'");
  }
};

/// Categories left after removing the excluded ones, sorted and unique.
inline std::vector<std::string> kept_categories(const BiographyEntry& e, const std::set<std::string>& excluded) {
  std::vector<std::string> out;
  for (const auto& c : e.categories)
    if (!excluded.count(c)) out.push_back(c);
  return out;
}

/// Mean category count after exclusion; the default pivot.
inline double mean_category_count(const std::vector<const BiographyEntry*>& entries,
                                  const std::set<std::string>& excluded) {
  if (entries.empty()) throw DataError("no entries for category statistics");
  double s = 0;
  for (const auto* e : entries) s += static_cast<double>(kept_categories(*e, excluded).size());
  return s / static_cast<double>(entries.size());
}

/// weight(c) = ln(N / df(c)) / ((1 - slope) * pivot + slope * n_categories)
/// with binary term frequency and N, df taken over `entries`. Without a
/// pivot the mean category count is used.
inline CategoryVectors build_category_vectors(const std::vector<const BiographyEntry*>& entries,
                                              const std::set<std::string>& excluded,
                                              std::optional<double> pivot, double slope) {
  if (!(slope >= 0.0 && slope <= 1.0)) throw DataError("slope must lie in [0, 1], got " + text::format_number(slope));
  if (entries.empty()) throw DataError("no entries to build category vectors from");
  const double pv = pivot ? *pivot : mean_category_count(entries, excluded);
  if (!(pv > 0.0) || !std::isfinite(pv)) throw DataError("pivot must be positive, got " + text::format_number(pv));

  std::vector<std::vector<std::string>> cats;
  std::map<std::string, std::size_t> df;
  std::set<std::string> seen_ids;
  for (const auto* e : entries) {
    if (!seen_ids.insert(e->person_id).second) throw DataError("duplicate person '" + e->person_id + "'");
    cats.push_back(kept_categories(*e, excluded));
    for (const auto& c : cats.back()) ++df[c];
  }
  const double n = static_cast<double>(entries.size());
  CategoryVectors out{pv, slope, {}};
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CategoryVector v;
    v.person_id = entries[i]->person_id;
    v.n_categories = cats[i].size();
    v.divisor = (1.0 - slope) * pv + slope * static_cast<double>(v.n_categories);
    for (const auto& c : cats[i]) {
      double idf = std::log(n / static_cast<double>(df[c]));
      if (idf > 0.0) v.weights[c] = idf / v.divisor;
    }
    out.vectors.push_back(std::move(v));
  }
  return out;
}

inline double dot(const CategoryVector& a, const CategoryVector& b) {
  const auto& small = a.weights.size() <= b.weights.size() ? a.weights : b.weights;
  const auto& large = a.weights.size() <= b.weights.size() ? b.weights : a.weights;
  double s = 0;
  for (const auto& [c, w] : small) {
    auto it = large.find(c);
    if (it != large.end()) s += w * it->second;
  }
  return s;
}

/// 0 when either vector is empty.
inline double cosine(const CategoryVector& a, const CategoryVector& b) {
  double na = 0, nb = 0;
  for (const auto& [c, w] : a.weights) na += w * w;
  for (const auto& [c, w] : b.weights) nb += w * w;
  if (na == 0 || nb == 0) return 0.0;
  return dot(a, b) / std::sqrt(na * nb);
}

// Cosine divides out each person's normalization divisor, so it ignores
// the slope; the pivoted dot product keeps it.
enum class Similarity { PivotedDot, Cosine };

inline std::string_view to_string(Similarity s) { return s == Similarity::Cosine ? "cosine" : "pivoted-dot"; }

inline Similarity parse_similarity(std::string_view s) {
  if (s == "cosine") return Similarity::Cosine;
  if (s == "pivoted-dot" || s == "dot") return Similarity::PivotedDot;
  throw Error("unknown similarity '" + std::string(s) + "' (expected pivoted-dot or cosine)");
}

inline double similarity(const CategoryVector& a, const CategoryVector& b, Similarity kind) {
  return kind == Similarity::Cosine ? cosine(a, b) : dot(a, b);
}

struct MatchedPair {
  std::string treatment_id;
  std::string control_id;
  double similarity = 0;
  bool below_floor = false;

  bool operator==(const MatchedPair&) const = default;
};

struct MatchOptions {
  Similarity similarity = Similarity::PivotedDot;
  double floor = 1e-9;
};

/// Treatments are visited in descending order of their best available
/// similarity (computed once, ties by id); each takes the most similar
/// unmatched candidate (ties by candidate id). Output is in visit order.
inline std::vector<MatchedPair> match_controls(const std::vector<std::string>& treatment,
                                               const std::vector<std::string>& candidates,
                                               const CategoryVectors& vectors, const MatchOptions& opt = {}) {
  if (candidates.size() < treatment.size())
    throw DataError("candidate pool (" + std::to_string(candidates.size()) + ") is smaller than the treatment set (" +
                    std::to_string(treatment.size()) + ")");
  std::set<std::string> tset(treatment.begin(), treatment.end());
  if (tset.size() != treatment.size()) throw DataError("duplicate treatment ids");
  std::vector<std::string> cands = candidates;
  std::sort(cands.begin(), cands.end());
  if (std::adjacent_find(cands.begin(), cands.end()) != cands.end()) throw DataError("duplicate candidate ids");
  for (const auto& c : cands)
    if (tset.count(c)) throw DataError("'" + c + "' is both a treatment and a candidate");

  std::vector<const CategoryVector*> cv;
  for (const auto& c : cands) cv.push_back(&vectors.at(c));
  struct Row {
    std::string id;
    std::vector<double> sims;
    double best = 0;
  };
  std::vector<Row> rows;
  for (const auto& t : treatment) {
    Row r{t, {}, -std::numeric_limits<double>::infinity()};
    const auto& tv = vectors.at(t);
    for (const auto* c : cv) {
      r.sims.push_back(similarity(tv, *c, opt.similarity));
      r.best = std::max(r.best, r.sims.back());
    }
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.best != b.best) return a.best > b.best;
    return a.id < b.id;
  });
  std::vector<bool> used(cands.size(), false);
  std::vector<MatchedPair> out;
  for (const auto& r : rows) {
    std::size_t pick = cands.size();
    for (std::size_t j = 0; j < cands.size(); ++j)
      if (!used[j] && (pick == cands.size() || r.sims[j] > r.sims[pick])) pick = j;
    used[pick] = true;
    out.push_back({r.id, cands[pick], r.sims[pick], r.sims[pick] < opt.floor});
  }
  return out;
}

struct SlopeTrial {
  double slope = 0;
  double gap = 0;
  double mean_treatment = 0;
  double mean_control = 0;
};

struct SlopeTuning {
  double best_slope = 0;
  double pivot = 0;
  std::vector<SlopeTrial> trials;  // grid order
};

inline std::vector<double> default_slope_grid() { return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}; }

/// For each slope, matches over the combined pool and measures
/// |mean categories(treatment) - mean categories(matched controls)| after
/// exclusion. The smallest gap wins; ties go to the smaller slope.
inline SlopeTuning tune_slope(const std::vector<const BiographyEntry*>& treatment,
                              const std::vector<const BiographyEntry*>& candidates,
                              const std::set<std::string>& excluded, const std::vector<double>& grid,
                              std::optional<double> pivot = std::nullopt, const MatchOptions& opt = {}) {
  if (grid.empty()) throw DataError("slope grid is empty");
  if (treatment.empty()) throw DataError("no treatment entries to tune on");
  std::vector<const BiographyEntry*> pool = treatment;
  pool.insert(pool.end(), candidates.begin(), candidates.end());
  std::vector<std::string> tids, cids;
  std::map<std::string, std::size_t> count;
  for (const auto* e : treatment) tids.push_back(e->person_id);
  for (const auto* e : candidates) cids.push_back(e->person_id);
  for (const auto* e : pool) count[e->person_id] = kept_categories(*e, excluded).size();

  SlopeTuning out;
  out.pivot = pivot ? *pivot : mean_category_count(pool, excluded);
  bool first = true;
  double best_gap = 0;
  for (double slope : grid) {
    auto vecs = build_category_vectors(pool, excluded, out.pivot, slope);
    auto pairs = match_controls(tids, cids, vecs, opt);
    double st = 0, sc = 0;
    for (const auto& p : pairs) {
      st += static_cast<double>(count[p.treatment_id]);
      sc += static_cast<double>(count[p.control_id]);
    }
    SlopeTrial t{slope, 0, st / static_cast<double>(pairs.size()), sc / static_cast<double>(pairs.size())};
    t.gap = std::abs(t.mean_treatment - t.mean_control);
    if (first || t.gap < best_gap || (t.gap == best_gap && slope < out.best_slope)) {
      out.best_slope = slope;
      best_gap = t.gap;
      first = false;
    }
    out.trials.push_back(t);
  }
  return out;
}

}  // namespace caa
