#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "builders.hpp"
#include "caa/corpus.hpp"

namespace caa {
namespace {

using build::Row;

TEST(Conllu, ReadsTokensAndSkipsSpecialNodes) {
  std::string text =
      "# sent_id = s1\n"
      "# text = Del rescate.\n"
      "1-2\tDel\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "1\tDe\tde\tADP\t_\t_\t3\tcase\t_\t_\n"
      "2\tel\tel\tDET\t_\t_\t3\tdet\t_\t_\n"
      "2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n"
      "3\trescate\trescate\tNOUN\t_\t_\t0\troot\t_\t_\n"
      "\n"
      "1\tHi\thi\tINTJ\t_\t_\t0\troot\t_\t_\n";
  auto s = conllu::read_string(text);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].id, "s1");
  EXPECT_EQ(s[0].text, "Del rescate.");
  ASSERT_EQ(s[0].tokens.size(), 3u);
  EXPECT_EQ(s[0].head_index(0), 2);
  EXPECT_EQ(s[0].head_index(2), -1);
  EXPECT_EQ(s[1].id, "2");
}

TEST(Conllu, ErrorsCarryLineNumbers) {
  try {
    conllu::read_string("1\tHi\thi\tINTJ\t_\t_\t0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  EXPECT_THROW(conllu::read_string("1\ta\ta\tX\t_\t_\t5\tdep\t_\t_\n"), ParseError);
  EXPECT_THROW(conllu::read_string("1\ta\ta\tX\t_\t_\t_\t_\t_\t_\n"), ParseError);
}

TEST(CorpusDump, MergesLinesPerPerson) {
  auto s = build::svo("1", "Kim", "founded", "found", "company");
  nlohmann::json a = {{"person_id", "p1"}, {"language", "en"}, {"group", "treatment"},
                      {"names", {"Lee Kim"}}, {"title", "Lee Kim"}, {"url", "u"},
                      {"categories", {"B", "A"}},
                      {"attributes", {{"nationality", {"American"}}, {"birth_year", 1950}, {"occupation", {"Artist"}}}},
                      {"conllu", s}};
  nlohmann::json b = a;
  b["language"] = "es";
  b["categories"] = {"C", "A"};
  std::istringstream in(a.dump() + "\n\n" + b.dump() + "\n");
  auto entries = read_corpus(in);
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].categories, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(entries[0].articles.size(), 2u);
  EXPECT_EQ(entries[0].attributes.birth_year, 1950);
  EXPECT_EQ(entries[0].article(Language("es"))->sentences.size(), 1u);

  b["group"] = "candidate";
  std::istringstream conflict(a.dump() + "\n" + b.dump() + "\n");
  try {
    read_corpus(conflict, "dump");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream dup(a.dump() + "\n" + a.dump() + "\n");
  EXPECT_THROW(read_corpus(dup), ParseError);
}

std::string pronoun_text(const std::string& he, int n_he, const std::string& she, int n_she) {
  std::string s;
  int id = 0;
  for (int i = 0; i < n_he; ++i) s += build::svo(std::to_string(++id), he, "x", "x", "y");
  for (int i = 0; i < n_she; ++i) s += build::svo(std::to_string(++id), she, "x", "x", "y");
  return s;
}

TEST(InferPronoun, Counts) {
  auto sets = default_pronoun_sets();
  EXPECT_EQ(infer_pronoun(build::article("en", {}, pronoun_text("He", 10, "she", 2)), sets), Pronoun::He);
  EXPECT_EQ(infer_pronoun(build::article("en", {}, ""), sets), Pronoun::Unresolved);
  EXPECT_EQ(infer_pronoun(build::article("en", {}, pronoun_text("he", 3, "She", 3)), sets), Pronoun::Unresolved);
}

TEST(InferPronoun, RussianMajorityMatchesCountOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    int on = static_cast<int>(rng() % 7), ona = static_cast<int>(rng() % 7);
    auto art = build::article("ru", {}, pronoun_text(trial % 2 ? "Он" : "он", on, "она", ona));
    auto expected = on > ona ? Pronoun::He : ona > on ? Pronoun::She : Pronoun::Unresolved;
    EXPECT_EQ(infer_pronoun(art, default_pronoun_sets()), expected);
  }
}

// "<Name> <verb> the <obj>" and "The committee honored <Name>".
std::string subject_sentence(const std::string& id, const std::string& name) {
  return build::svo(id, name, "initiated", "initiate", "project");
}
std::string object_sentence(const std::string& id, const std::string& name) {
  return build::conllu(id, {{"The", "the", "DET", 2, "det"},
                            {"committee", "committee", "NOUN", 3, "nsubj"},
                            {"honored", "honor", "VERB", 0, "root"},
                            {name, name, "PROPN", 3, "obj"}});
}

TEST(FindMentions, FullNameSurnameAndPronoun) {
  std::string text =
      build::conllu("1", {{"Ada", "Ada", "PROPN", 3, "nsubj"},
                          {"Jones", "Jones", "PROPN", 1, "flat"},
                          {"founded", "found", "VERB", 0, "root"},
                          {"it", "it", "PRON", 3, "obj"}}) +
      subject_sentence("2", "Jones") + object_sentence("3", "Jones") + subject_sentence("4", "She") +
      subject_sentence("5", "Smith") +
      // Subject of a non-verb head does not count.
      build::conllu("6", {{"Jones", "Jones", "PROPN", 2, "nsubj"}, {"tall", "tall", "ADJ", 0, "root"}});
  auto art = build::article("en", {"Ada Jones"}, text);
  auto m = find_mentions(art, Pronoun::She, {});
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0].token, 0u);
  EXPECT_EQ(m[0].verb, 2u);
  EXPECT_EQ(m[2].slot, Slot::Object);
  EXPECT_EQ(m[3].sentence, 3u);
  EXPECT_EQ(count_analyzable_sentences(m), 4u);
  // Unresolved pronoun: the "She" sentence no longer counts.
  EXPECT_EQ(count_analyzable_sentences(find_mentions(art, Pronoun::Unresolved, {})), 3u);
  DetectionOptions no_surname;
  no_surname.match_surname = false;
  EXPECT_EQ(count_analyzable_sentences(find_mentions(art, Pronoun::Unresolved, no_surname)), 1u);
}

BiographyEntry person(const std::string& id, const std::map<std::string, int>& analyzable) {
  auto e = build::entry(id, Group::Treatment, {});
  for (const auto& [lang, n] : analyzable) {
    std::string text;
    for (int i = 0; i < n; ++i) text += subject_sentence(std::to_string(i), "Vega");
    text += build::svo("x", "Someone", "saw", "see", "bird");
    e.articles[Language(lang)] = build::article(lang, {"Ana Vega"}, text);
  }
  return e;
}

TEST(FilterEntries, BoundaryAndMissingLanguage) {
  std::vector<Language> langs = {Language("en"), Language("es"), Language("ru")};
  std::vector<BiographyEntry> in = {person("exact", {{"en", 3}, {"es", 3}, {"ru", 3}}),
                                    person("short", {{"en", 2}, {"es", 5}, {"ru", 5}}),
                                    person("no-ru", {{"en", 5}, {"es", 5}})};
  auto out = filter_entries(in, langs);
  ASSERT_EQ(out.kept.size(), 1u);
  EXPECT_EQ(out.kept[0].person_id, "exact");
  EXPECT_EQ(out.decisions[1].reason, "2 analyzable en sentences");
  EXPECT_EQ(out.decisions[2].reason, "no ru article");
}

TEST(FilterEntries, Idempotent) {
  std::mt19937_64 rng(12);
  std::vector<Language> langs = {Language("en"), Language("es")};
  std::vector<BiographyEntry> in;
  for (int i = 0; i < 30; ++i)
    in.push_back(person("p" + std::to_string(i), {{"en", static_cast<int>(rng() % 6)}, {"es", static_cast<int>(rng() % 6)}}));
  auto once = filter_entries(in, langs);
  auto twice = filter_entries(once.kept, langs);
  ASSERT_EQ(twice.kept.size(), once.kept.size());
  for (std::size_t i = 0; i < once.kept.size(); ++i) EXPECT_EQ(twice.kept[i].person_id, once.kept[i].person_id);
}

TEST(ExtractTuples, RunningExample) {
  auto corpus = conllu::read_string(build::conllu("1", {{"the", "the", "DET", 2, "det"},
                                                         {"firefighter", "firefighter", "NOUN", 3, "nsubj"},
                                                         {"rescued", "rescue", "VERB", 0, "root"},
                                                         {"the", "the", "DET", 5, "det"},
                                                         {"boy", "boy", "NOUN", 3, "obj"}}));
  auto t = extract_candidate_tuples(corpus, {"firefighter", "boy"});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].subject, "firefighter");
  EXPECT_EQ(t[0].verb, "rescue");
  EXPECT_EQ(t[0].object, "boy");
  EXPECT_EQ(t[0].frequency, 1u);
  EXPECT_EQ(t[0].samples, (std::vector<std::string>{"the firefighter rescued the boy"}));
  EXPECT_TRUE(extract_candidate_tuples(corpus, {}).empty());
}

TEST(ExtractTuples, UnparsedCorpusIsAnError) {
  auto corpus = conllu::read_string("1\tHi\thi\tINTJ\t_\t_\t0\t_\t_\t_\n");
  EXPECT_THROW(extract_candidate_tuples(corpus, {"hi"}), DataError);
}

TEST(ExtractTuples, TopKMatchesBruteForceCount) {
  std::mt19937_64 rng(31);
  const std::vector<std::string> verbs = {"help", "hire", "meet", "pay", "see", "warn"};
  const std::vector<std::string> nouns = {"boy", "man", "car", "woman", "tree"};
  const std::set<std::string> persons = {"boy", "man", "woman"};
  std::string text;
  std::map<std::string, int> verb_count;
  std::map<std::tuple<std::string, std::string, std::string>, int> tuple_count;
  for (int i = 0; i < 400; ++i) {
    auto v = verbs[rng() % verbs.size()], s = nouns[rng() % nouns.size()], o = nouns[rng() % nouns.size()];
    text += build::svo(std::to_string(i), s, v + "ed", v, o);
    ++verb_count[v];
    if (persons.count(s) || persons.count(o)) ++tuple_count[{v, s, o}];
  }
  auto corpus = conllu::read_string(text);
  TupleOptions opt;
  opt.k_verbs = 4;
  opt.k_contexts = 2;
  auto got = extract_candidate_tuples(corpus, persons, opt);

  // Oracle: sort verbs by (-count, lemma), tuples by (-count, subject, object).
  std::vector<std::pair<int, std::string>> vr;
  for (auto& [v, c] : verb_count) vr.push_back({-c, v});
  std::sort(vr.begin(), vr.end());
  std::vector<std::tuple<std::string, std::string, std::string, int>> expected;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<std::tuple<int, std::string, std::string>> tr;
    for (auto& [k, c] : tuple_count)
      if (std::get<0>(k) == vr[i].second) tr.push_back({-c, std::get<1>(k), std::get<2>(k)});
    std::sort(tr.begin(), tr.end());
    for (std::size_t j = 0; j < std::min<std::size_t>(2, tr.size()); ++j)
      expected.push_back({std::get<1>(tr[j]), vr[i].second, std::get<2>(tr[j]), -std::get<0>(tr[j])});
  }
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].subject, std::get<0>(expected[i]));
    EXPECT_EQ(got[i].verb, std::get<1>(expected[i]));
    EXPECT_EQ(got[i].object, std::get<2>(expected[i]));
    EXPECT_EQ(got[i].frequency, static_cast<std::size_t>(std::get<3>(expected[i])));
  }
}

}  // namespace
}  // namespace caa
