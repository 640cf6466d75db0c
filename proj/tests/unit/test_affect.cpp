#include <random>

#include <gtest/gtest.h>

#include "builders.hpp"
#include "caa/affect.hpp"
#include "oracles.hpp"

namespace caa {
namespace {

TEST(SelectSentences, SubjectSlotsOnly) {
  std::string text = build::svo("a", "Jones", "initiated", "initiate", "project") +
                     build::conllu("b", {{"The", "the", "DET", 2, "det"},
                                         {"committee", "committee", "NOUN", 3, "nsubj"},
                                         {"honored", "honor", "VERB", 0, "root"},
                                         {"Jones", "Jones", "PROPN", 3, "obj"}});
  auto art = build::article("en", {"Mary Jones"}, text);
  auto sel = select_sentences(art, Pronoun::Unresolved);
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel[0].sentence_id, "a");
  EXPECT_EQ(art.sentences[0].tokens[sel[0].verb].form, "initiated");
  EXPECT_EQ(corpus_feature_key("p1", Language("en"), sel[0]), "p1/en/a#1");
}

TEST(SelectSentences, FiveAnnotatedHits) {
  // Hand-annotated: sentences 1, 2, 4, 6 and 7 have the person as subject
  // (7 through the pronoun); 3 is an object slot and 5 a different subject.
  std::string text = build::svo("1", "Reyes", "wrote", "write", "novel") +
                     build::svo("2", "Reyes", "won", "win", "prize") +
                     build::conllu("3", {{"Critics", "critic", "NOUN", 2, "nsubj"},
                                         {"praised", "praise", "VERB", 0, "root"},
                                         {"Reyes", "Reyes", "PROPN", 2, "obj"}}) +
                     build::svo("4", "Reyes", "left", "leave", "city") +
                     build::svo("5", "Garcia", "met", "meet", "editor") +
                     build::svo("6", "Reyes", "taught", "teach", "class") +
                     build::svo("7", "She", "founded", "found", "journal");
  auto art = build::article("en", {"Luz Reyes"}, text);
  auto sel = select_sentences(art, Pronoun::She);
  std::vector<std::string> ids;
  for (const auto& s : sel) ids.push_back(s.sentence_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"1", "2", "4", "6", "7"}));
}

ConnotationModel identity_model(Dimension d) {
  ConnotationModel m;
  m.dimension = d;
  m.weights = Eigen::MatrixXd::Identity(3, 3);
  m.bias.setZero();
  return m;
}

TEST(ScoreEntity, MeanOfPredictedLabels) {
  std::string text;
  for (int i = 0; i < 3; ++i) text += build::svo(std::to_string(i), "Reyes", "wrote", "write", "book");
  auto art = build::article("es", {"Luz Reyes"}, text);
  auto slots = select_sentences(art, Pronoun::Unresolved);
  ModelSet models;
  for (auto d : kScoredDimensions) models[d] = identity_model(d);
  // Predictions +1, +1, -1 -> 1/3.
  std::vector<FeatureRecord> recs = {{"p/es/0#1", Language("es"), {0, 0, 1}},
                                     {"p/es/1#1", Language("es"), {0, 0, 2}},
                                     {"p/es/2#1", Language("es"), {1, 0, 0}}};
  std::unordered_map<std::string, const FeatureRecord*> idx;
  for (const auto& r : recs) idx[r.key] = &r;
  auto s = score_entity("p", art, slots, models, idx);
  ASSERT_EQ(s.size(), 3u);
  for (const auto& e : s) {
    EXPECT_NEAR(e.mean, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(e.n_verbs, 3u);
  }
  EXPECT_TRUE(score_entity("p", art, {}, models, idx).empty());
  idx.erase("p/es/2#1");
  EXPECT_THROW(score_entity("p", art, slots, models, idx), DataError);
}

TEST(ScoreEntity, FrozenModelMatchesManualForwardPass) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g;
  ConnotationModel m;
  m.weights = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return g(rng); });
  m.bias = Eigen::Vector3d(g(rng), g(rng), g(rng));
  ModelSet models;
  for (auto d : kScoredDimensions) {
    models[d] = m;
    models[d].dimension = d;
  }
  std::string text;
  for (int i = 0; i < 10; ++i) text += build::svo(std::to_string(i), "Vega", "sang", "sing", "song");
  auto art = build::article("ru", {"Vega"}, text);
  auto slots = select_sentences(art, Pronoun::Unresolved);
  ASSERT_EQ(slots.size(), 10u);
  std::vector<FeatureRecord> recs;
  for (const auto& s : slots) {
    FeatureRecord r{corpus_feature_key("v", art.language, s), art.language, {}};
    for (int d = 0; d < 4; ++d) r.vector.push_back(static_cast<float>(g(rng)));
    recs.push_back(r);
  }
  std::unordered_map<std::string, const FeatureRecord*> idx;
  for (const auto& r : recs) idx[r.key] = &r;
  // Manual logits: z_c = b_c + sum_d W_cd x_d; first maximal class wins.
  double manual = 0;
  for (const auto& r : recs) {
    int best = 0;
    double zbest = -1e300;
    for (int c = 0; c < 3; ++c) {
      double z = m.bias(c);
      for (int d = 0; d < 4; ++d) z += m.weights(c, d) * static_cast<double>(r.vector[static_cast<std::size_t>(d)]);
      if (z > zbest) {
        zbest = z;
        best = c;
      }
    }
    manual += best - 1;
  }
  auto scores = score_entity("v", art, slots, models, idx);
  EXPECT_NEAR(scores[0].mean, manual / 10.0, 1e-15);
}

ScoreTable table_from(const std::vector<std::tuple<std::string, double, std::size_t>>& rows,
                      Language lang = Language("en"), Dimension dim = Dimension::Power) {
  ScoreTable t;
  for (const auto& [id, mean, n] : rows) t.scores.push_back({id, lang, dim, mean, n});
  return t;
}

TEST(DiffScores, FivePairFixture) {
  // Diffs 0.2, 0.1, 0.3, 0.15, 0.25.
  std::vector<MatchedPair> pairs;
  std::vector<std::tuple<std::string, double, std::size_t>> rows;
  const double diffs[] = {0.2, 0.1, 0.3, 0.15, 0.25};
  for (int i = 0; i < 5; ++i) {
    auto t = "t" + std::to_string(i), c = "c" + std::to_string(i);
    pairs.push_back({t, c, 1.0, false});
    rows.push_back({t, 0.5, 30});
    rows.push_back({c, 0.5 - diffs[i], 30});
  }
  auto r = diff_scores(pairs, table_from(rows), Language("en"), Dimension::Power);
  EXPECT_NEAR(r.mean_diff, 0.2, 1e-6);
  EXPECT_NEAR(r.t, 5.656854249492381, 1e-6);
  EXPECT_NEAR(r.p, 0.004812678330044224, 1e-6);
  EXPECT_NEAR(r.ci_low, 0.10183784192612197, 1e-6);
  EXPECT_NEAR(r.ci_high, 0.298162158073878, 1e-6);
  EXPECT_EQ(r.n_pairs, 5u);
  EXPECT_EQ(r.total_verbs, 300u);
  EXPECT_GT(r.mean_diff, 0.0);  // treatment scored higher

  std::vector<MatchedPair> swapped;
  for (const auto& p : pairs) swapped.push_back({p.control_id, p.treatment_id, p.similarity, false});
  auto s = diff_scores(swapped, table_from(rows), Language("en"), Dimension::Power);
  EXPECT_EQ(s.mean_diff, -r.mean_diff);
  EXPECT_EQ(s.t, -r.t);
  EXPECT_EQ(s.p, r.p);

  try {
    diff_scores(pairs, table_from(rows), Language("en"), Dimension::Power, 301);
    FAIL();
  } catch (const InsufficientDataError& e) {
    EXPECT_EQ(e.count(), 300u);
  }
}

TEST(DiffScores, IdenticalScoresAndPairwiseDropping) {
  std::vector<MatchedPair> pairs = {{"a", "b", 1, false}, {"c", "d", 1, false}, {"e", "f", 1, false}};
  auto t = table_from({{"a", 0.3, 100}, {"b", 0.3, 100}, {"c", -0.1, 100}, {"d", -0.1, 100}, {"e", 0.9, 500}});
  auto r = diff_scores(pairs, t, Language("en"), Dimension::Power);
  EXPECT_EQ(r.mean_diff, 0.0);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.n_pairs, 2u);
  EXPECT_EQ(r.total_verbs, 400u);  // the unmatched "e" contributes nothing
}

TEST(DiffScores, AddingAPairAtTheMeanKeepsMeanAndTightensInterval) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<MatchedPair> pairs;
  std::vector<std::tuple<std::string, double, std::size_t>> rows;
  for (int i = 0; i < 8; ++i) {
    pairs.push_back({"t" + std::to_string(i), "c" + std::to_string(i), 1, false});
    rows.push_back({"t" + std::to_string(i), u(rng), 40});
    rows.push_back({"c" + std::to_string(i), u(rng), 40});
  }
  auto before = diff_scores(pairs, table_from(rows), Language("en"), Dimension::Power);
  pairs.push_back({"tm", "cm", 1, false});
  rows.push_back({"tm", before.mean_diff, 40});
  rows.push_back({"cm", 0.0, 40});
  auto after = diff_scores(pairs, table_from(rows), Language("en"), Dimension::Power);
  EXPECT_NEAR(after.mean_diff, before.mean_diff, 1e-15);
  double hw_before = (before.ci_high - before.ci_low) / 2 * std::sqrt(8.0);
  double hw_after = (after.ci_high - after.ci_low) / 2 * std::sqrt(9.0);
  EXPECT_LE(hw_after, hw_before);
}

BiographyEntry with_attrs(const std::string& id, std::vector<std::string> nat, std::optional<int> year,
                          std::vector<std::string> occ) {
  auto e = build::entry(id, Group::Treatment, {});
  e.attributes = {std::move(nat), year, std::move(occ)};
  return e;
}

TEST(FacetValues, DefaultBins) {
  FacetOptions f;
  auto v = facet_values(with_attrs("a", {"American"}, 1900, {"Singer", "Artist", "Entertainer"}), f);
  EXPECT_EQ(v, (std::vector<std::pair<std::string, std::string>>{
                   {"nationality", "American"}, {"birth_year", "1900-1960"}, {"occupation", "Entertainer"}}));
  v = facet_values(with_attrs("b", {"Mexican"}, 1961, {"Politician"}), f);
  EXPECT_EQ(v[0].second, "non-American");
  EXPECT_EQ(v[1].second, ">1960");
  EXPECT_EQ(v[2].second, "Other");
  v = facet_values(with_attrs("c", {}, 1899, {}), f);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].second, "<1900");
}

TEST(SubgroupReport, PartitionEngineeredEffectsAndRefusals) {
  // Americans get diff +0.4, others -0.2; every score rests on 40 verbs.
  std::vector<BiographyEntry> people;
  std::vector<MatchedPair> pairs;
  ScoreTable scores;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    bool us = i < 12;
    auto t = "t" + std::to_string(i), c = "c" + std::to_string(i);
    people.push_back(with_attrs(t, {us ? "American" : "British"}, 1800 + 10 * i, {i % 3 ? "Artist" : "Athlete"}));
    pairs.push_back({t, c, 1, false});
    double base = static_cast<double>(rng() % 5) / 10.0 - 0.2;
    double noise = i % 2 ? 0.01 : -0.01;
    for (auto d : kScoredDimensions) {
      scores.scores.push_back({t, Language("en"), d, base + (us ? 0.4 : -0.2) + noise, 40});
      scores.scores.push_back({c, Language("en"), d, base, 40});
    }
  }
  std::map<std::string, const BiographyEntry*> tmap;
  for (const auto& p : people) tmap[p.person_id] = &p;
  auto out = subgroup_report(pairs, tmap, scores, {Language("en")});
  std::map<std::pair<std::string, std::string>, DiffReport> power;
  for (const auto& r : out.reports) {
    EXPECT_GE(r.total_verbs, kDefaultMinVerbs);
    if (r.dimension == Dimension::Power) power[{r.facet, r.value}] = r;
  }
  EXPECT_EQ(power.at({"all", "all"}).n_pairs, 20u);
  EXPECT_NEAR(power.at({"nationality", "American"}).mean_diff, 0.4, 1e-12);
  EXPECT_NEAR(power.at({"nationality", "non-American"}).mean_diff, -0.2, 1e-12);
  EXPECT_EQ(power.at({"nationality", "American"}).n_pairs + power.at({"nationality", "non-American"}).n_pairs, 20u);
  // Birth years 1800..1990 in steps of 10: 10 before 1900, 7 in 1900-1960
  // (7 * 80 = 560 verbs), 3 after 1960 (240 verbs) -> refused.
  EXPECT_EQ(power.at({"birth_year", "1900-1960"}).n_pairs, 7u);
  bool refused_late = false;
  for (const auto& f : out.refused)
    if (f.facet == "birth_year" && f.value == ">1960" && f.dimension == Dimension::Power) {
      refused_late = true;
      EXPECT_EQ(f.total_verbs, 240u);
    }
  EXPECT_TRUE(refused_late);
  // A one-valued facet equals the global report.
  FacetOptions only_occ;
  only_occ.nationality = only_occ.birth_year = false;
  only_occ.occupation_priority = {};
  auto one = subgroup_report(pairs, tmap, scores, {Language("en")}, only_occ);
  for (const auto& r : one.reports)
    if (r.facet == "occupation" && r.dimension == Dimension::Power) {
      EXPECT_EQ(r.mean_diff, power.at({"all", "all"}).mean_diff);
      EXPECT_EQ(r.t, power.at({"all", "all"}).t);
    }
}

TEST(RankImbalance, SortOracleAndFlags) {
  ScoreTable s;
  const std::vector<std::tuple<std::string, double, double>> rows = {
      {"p1", 0.5, 0.25}, {"p2", 0.2, 0.2}, {"p3", -0.3, 0.4}, {"p4", 0.75, -0.25}, {"p5", 0.25, 0.0}, {"p6", 0.0, -0.25}};
  for (const auto& [id, a, b] : rows) {
    s.scores.push_back({id, Language("en"), Dimension::Power, a, 5});
    s.scores.push_back({id, Language("es"), Dimension::Power, b, 5});
  }
  s.scores.push_back({"p7", Language("en"), Dimension::Power, 1.0, 5});  // no es score
  auto r = rank_imbalance(s, {}, Language("en"), Language("es"), Dimension::Power, 6);
  std::vector<std::string> order;
  for (const auto& e : r.entries) order.push_back(e.person_id);
  // Differentials: p4 1, p1 0.25, p5 0.25, p6 0.25, p2 0, p3 -0.7.
  EXPECT_EQ(order, (std::vector<std::string>{"p4", "p1", "p5", "p6", "p2", "p3"}));
  EXPECT_FALSE(r.truncated_request);
  auto top = rank_imbalance(s, {}, Language("en"), Language("es"), Dimension::Power, 1);
  EXPECT_EQ(top.entries.size(), 1u);
  EXPECT_EQ(top.entries[0].person_id, "p4");
  auto all = rank_imbalance(s, {}, Language("en"), Language("es"), Dimension::Power, 50);
  EXPECT_TRUE(all.truncated_request);
  EXPECT_EQ(all.entries.size(), 6u);
}

}  // namespace
}  // namespace caa
