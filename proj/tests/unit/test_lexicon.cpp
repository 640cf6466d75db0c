#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "caa/lexicon.hpp"
#include "oracles.hpp"

namespace caa {
namespace {

text::Table table_from(const std::string& body) {
  std::istringstream in(
      "instance_id\tlanguage\tdimension\tverb_lemma\tsentence\tverb_token_index\tannotator_id\tjudgement\n" +
      body);
  return text::read_table(in, '\t', "test.tsv");
}

ConnotationInstance make_instance(std::string id, std::vector<int> values, std::string verb = "v") {
  ConnotationInstance inst;
  inst.instance_id = std::move(id);
  inst.verb_lemma = std::move(verb);
  inst.language = Language("en");
  for (std::size_t k = 0; k < values.size(); ++k)
    inst.judgements.push_back({"a" + std::to_string(k), values[k]});
  return inst;
}

TEST(IngestJudgements, MapsPowerPhrasesOntoValues) {
  auto lex = ingest_judgements(table_from(
      "i1\ten\tpower\trescue\tThe firefighter rescued the boy\t2\tw1\tsubject has more power\n"
      "i1\ten\tpower\trescue\tThe firefighter rescued the boy\t2\tw2\tless\n"
      "i1\ten\tpower\trescue\tThe firefighter rescued the boy\t2\tw3\tEqual  Power\n"));
  ASSERT_EQ(lex.size(), 1u);
  ASSERT_EQ(lex[0].instances.size(), 1u);
  const auto& js = lex[0].instances[0].judgements;
  ASSERT_EQ(js.size(), 3u);
  EXPECT_EQ(js[0].value, 1);
  EXPECT_EQ(js[1].value, -1);
  EXPECT_EQ(js[2].value, 0);
  EXPECT_FALSE(lex[0].instances[0].aggregate_score.has_value());
}

TEST(IngestJudgements, EmptyInputYieldsNoInstances) {
  std::istringstream in("");
  auto lex = ingest_judgements(text::read_table(in, '\t'));
  EXPECT_TRUE(lex.empty());
  EXPECT_TRUE(ingest_judgements(table_from("")).empty());
}

TEST(IngestJudgements, GroupsRowsByInstance) {
  auto lex = ingest_judgements(table_from(
      "x\tes\tagency\telegir\tElla eligió el libro\t1\ta\thigh\n"
      "x\tes\tagency\telegir\tElla eligió el libro\t1\tb\tmoderate\n"
      "x\tes\tagency\telegir\tElla eligió el libro\t1\tc\tlow\n"));
  ASSERT_EQ(lex.size(), 1u);
  EXPECT_EQ(lex[0].language.code(), "es");
  EXPECT_EQ(lex[0].dimension, Dimension::Agency);
  ASSERT_EQ(lex[0].instances.size(), 1u);
  EXPECT_EQ(lex[0].instances[0].judgements.size(), 3u);
}

TEST(IngestJudgements, SplitsLexiconsByLanguageAndDimension) {
  auto lex = ingest_judgements(table_from(
      "x\ten\tsent_subj\tv\ts\t0\ta\tpositive\n"
      "x\ten\tSent(obj)\tv\ts\t0\ta\tnegative\n"
      "y\tru\tpower\tv\ts\t0\ta\tmore\n"));
  ASSERT_EQ(lex.size(), 3u);
  EXPECT_EQ(lexicon_name(lex[0].language, lex[0].dimension), "en-sent_subj");
  EXPECT_EQ(lexicon_name(lex[1].language, lex[1].dimension), "en-sent_obj");
  EXPECT_EQ(lexicon_name(lex[2].language, lex[2].dimension), "ru-power");
}

TEST(IngestJudgements, UnknownJudgementNamesTheRow) {
  try {
    ingest_judgements(table_from("x\ten\tpower\tv\ts\t0\ta\tmore\n"
                                 "x\ten\tpower\tv\ts\t0\tb\tpositive\n"));
    FAIL() << "expected a ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
}

TEST(IngestJudgements, DuplicateAnnotatorIsRejected) {
  EXPECT_THROW(ingest_judgements(table_from("x\ten\tpower\tv\ts\t0\ta\tmore\n"
                                            "x\ten\tpower\tv\ts\t0\ta\tless\n")),
               ParseError);
}

TEST(Ternarize, BoundariesArePolar) {
  EXPECT_EQ(ternarize(0.35), TernaryLabel::Positive);
  EXPECT_EQ(ternarize(-0.35), TernaryLabel::Negative);
  EXPECT_EQ(ternarize(std::nextafter(0.35, 0.0)), TernaryLabel::Neutral);
  EXPECT_EQ(ternarize(std::nextafter(-0.35, 0.0)), TernaryLabel::Neutral);
  EXPECT_EQ(ternarize(1.0), TernaryLabel::Positive);
  EXPECT_EQ(ternarize(-1.0), TernaryLabel::Negative);
}

TEST(Ternarize, IsMonotone) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    double a = u(rng), b = u(rng);
    if (a < b) std::swap(a, b);
    EXPECT_GE(value(ternarize(a)), value(ternarize(b)));
  }
}

TEST(AggregateAndTernarize, WorkedExamples) {
  Lexicon lex;
  lex.language = Language("en");
  lex.instances = {make_instance("a", {1, 1, 0}), make_instance("b", {1, -1, 0}), make_instance("c", {1, -1})};
  auto out = aggregate_and_ternarize(lex);
  EXPECT_NEAR(*out.instances[0].aggregate_score, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(*out.instances[0].label, TernaryLabel::Positive);
  EXPECT_EQ(*out.instances[1].aggregate_score, 0.0);
  EXPECT_EQ(*out.instances[1].label, TernaryLabel::Neutral);
  // Polar-opposite pair collapses to neutral.
  EXPECT_EQ(*out.instances[2].aggregate_score, 0.0);
  EXPECT_EQ(*out.instances[2].label, TernaryLabel::Neutral);
}

TEST(AggregateAndTernarize, ExactBoundaryScoreIsPolar) {
  // 7 / 20 = 0.35 exactly as a double quotient.
  std::vector<int> v(20, 0);
  std::fill(v.begin(), v.begin() + 7, 1);
  Lexicon lex;
  lex.instances = {make_instance("pos", v)};
  for (auto& x : v) x = -x;
  lex.instances.push_back(make_instance("neg", v));
  auto out = aggregate_and_ternarize(lex);
  EXPECT_EQ(*out.instances[0].aggregate_score, 0.35);
  EXPECT_EQ(*out.instances[0].label, TernaryLabel::Positive);
  EXPECT_EQ(*out.instances[1].label, TernaryLabel::Negative);
}

TEST(AggregateAndTernarize, RejectsSingleJudgementNamingInstance) {
  Lexicon lex;
  lex.instances = {make_instance("lonely", {1})};
  try {
    aggregate_and_ternarize(lex);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(AggregateAndTernarize, PermutationInvariantAndMatchesOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> val(-1, 1), len(2, 6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) x = val(rng);
    Lexicon lex;
    lex.instances = {make_instance("i", v)};
    auto a = aggregate_and_ternarize(lex).instances[0];
    std::shuffle(v.begin(), v.end(), rng);
    lex.instances = {make_instance("i", v)};
    auto b = aggregate_and_ternarize(lex).instances[0];
    EXPECT_EQ(*a.aggregate_score, *b.aggregate_score);
    EXPECT_EQ(*a.label, *b.label);
    auto expected = oracle::brute_force_label(v);
    EXPECT_EQ(value(*a.label), expected);
  }
}

TEST(FilterAnnotators, ConsistentAnnotatorIsRetained) {
  Lexicon lex;
  lex.instances = {make_instance("a", {1, 1, 1}), make_instance("b", {0, 0, 0})};
  auto r = filter_annotators({lex});
  EXPECT_TRUE(r.report.removed.empty());
  EXPECT_EQ(r.lexicons[0].instances.size(), 2u);
}

TEST(FilterAnnotators, RemovesEngineeredOutlierWithHandComputedThreshold) {
  // Pool of 20 annotators; "bad" always disagrees with two agreeing peers.
  // Rates: bad = 1, the other 19 = 0. mean = 0.05, population SD = sqrt(0.0475).
  Lexicon lex;
  lex.language = Language("en");
  int next = 0;
  for (int i = 0; i < 40; ++i) {
    ConnotationInstance inst;
    inst.instance_id = "i" + std::to_string(i);
    inst.language = lex.language;
    std::string p1 = "w" + std::to_string(next++ % 19), p2 = "w" + std::to_string(next++ % 19);
    inst.judgements = {{p1, 1}, {p2, 1}};
    if (i % 2 == 0) inst.judgements.push_back({"bad", -1});
    lex.instances.push_back(inst);
  }
  auto r = filter_annotators({lex});
  EXPECT_NEAR(r.report.mean_rate, 0.05, 1e-12);
  EXPECT_NEAR(r.report.sd_rate, std::sqrt(0.0475), 1e-12);
  EXPECT_NEAR(r.report.threshold, 0.05 + std::sqrt(0.0475), 1e-12);
  ASSERT_EQ(r.report.removed, std::vector<std::string>{"bad"});
  for (const auto& inst : r.lexicons[0].instances) EXPECT_GE(inst.judgements.size(), 2u);
  EXPECT_EQ(r.lexicons[0].instances.size(), 40u);
}

TEST(FilterAnnotators, DisagreementNeedsAgreeingPeers) {
  std::vector<Judgement> js = {{"a", 1}, {"b", 0}, {"c", -1}};
  for (std::size_t k = 0; k < 3; ++k) EXPECT_FALSE(disagrees_with_peers(js, k));
  js = {{"a", 1}, {"b", 1}, {"c", 0}};
  EXPECT_FALSE(disagrees_with_peers(js, 0));
  EXPECT_TRUE(disagrees_with_peers(js, 2));
  js = {{"a", 1}, {"b", 0}};
  EXPECT_TRUE(disagrees_with_peers(js, 0));
  EXPECT_TRUE(disagrees_with_peers(js, 1));
}

TEST(FilterAnnotators, DropsInstancesLeftWithOneJudgement) {
  Lexicon lex;
  lex.language = Language("en");
  // "x" disagrees on every instance it sees; on "two" it leaves one judgement.
  lex.instances = {make_instance("one", {1, 1})};
  lex.instances[0].judgements = {{"p", 1}, {"q", 1}, {"x", -1}};
  ConnotationInstance two = make_instance("two", {});
  two.judgements = {{"x", 0}, {"p", 1}};
  lex.instances.push_back(two);
  for (int i = 0; i < 6; ++i) {
    auto inst = make_instance("ok" + std::to_string(i), {});
    inst.judgements = {{"p", 0}, {"q", 0}, {"r", 0}};
    lex.instances.push_back(inst);
  }
  auto r = filter_annotators({lex});
  ASSERT_EQ(r.report.removed, std::vector<std::string>{"x"});
  ASSERT_EQ(r.report.dropped_instances.size(), 1u);
  EXPECT_EQ(r.report.dropped_instances[0].second, "two");
}

TEST(FilterAnnotators, EmptyLexiconPassesThrough) {
  Lexicon lex;
  lex.language = Language("en");
  auto r = filter_annotators({lex});
  EXPECT_TRUE(r.report.annotators.empty());
  EXPECT_EQ(r.lexicons.size(), 1u);
}

TEST(FilterAnnotators, IdempotentWhenNobodyExceedsRecomputedThreshold) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> val(-1, 1), ann(0, 11);
  for (int trial = 0; trial < 50; ++trial) {
    Lexicon lex;
    lex.language = Language("en");
    for (int i = 0; i < 30; ++i) {
      auto inst = make_instance("i" + std::to_string(i), {});
      std::set<int> used;
      while (used.size() < 3) used.insert(ann(rng));
      for (int a : used) inst.judgements.push_back({"w" + std::to_string(a), val(rng)});
      lex.instances.push_back(inst);
    }
    auto once = filter_annotators({lex});
    auto twice = filter_annotators(once.lexicons);
    if (twice.report.removed.empty()) {
      EXPECT_EQ(twice.lexicons, once.lexicons);
    }
  }
}

TEST(PairwiseAgreement, Definitions) {
  Lexicon lex;
  lex.instances = {make_instance("a", {1, 1, 1})};
  EXPECT_EQ(pairwise_agreement(lex, false), 1.0);
  lex.instances = {make_instance("a", {1, 0, -1})};
  EXPECT_NEAR(pairwise_agreement(lex, true), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(pairwise_agreement(lex, false), 0.0);
  lex.instances = {};
  EXPECT_THROW(pairwise_agreement(lex, true), DataError);
}

TEST(LexiconJson, RoundTripsAndValidates) {
  Lexicon lex;
  lex.language = Language("ru");
  lex.dimension = Dimension::SentObj;
  lex.provenance = "unit";
  lex.instances = {make_instance("a", {1, 1, 0}, "спасти"), make_instance("b", {-1, -1})};
  for (auto& i : lex.instances) {
    i.language = lex.language;
    i.dimension = lex.dimension;
  }
  lex = aggregate_and_ternarize(lex);
  auto back = lexicon_from_json(nlohmann::json::parse(to_json(lex).dump()));
  EXPECT_EQ(back, lex);

  auto j = nlohmann::json::parse(to_json(lex).dump());
  j["instances"][0]["label"] = "negative";
  EXPECT_THROW(lexicon_from_json(j), DataError);
}

}  // namespace
}  // namespace caa
