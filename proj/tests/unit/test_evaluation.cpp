#include <random>
#include <set>

#include <gtest/gtest.h>

#include "caa/evaluation.hpp"

namespace caa {
namespace {

std::vector<std::string> keys_of(std::size_t n, const std::string& prefix = "k") {
  std::vector<std::string> k;
  for (std::size_t i = 0; i < n; ++i) k.push_back(prefix + std::to_string(i));
  return k;
}

TEST(FoldPlan, PartitionsEveryFold) {
  for (std::size_t n : {5u, 7u, 23u, 100u}) {
    auto plan = make_fold_plan(keys_of(n), 99);
    ASSERT_EQ(plan.size(), 5u);
    std::multiset<std::string> tests;
    for (const auto& f : plan.folds) {
      std::set<std::string> all;
      all.insert(f.train.begin(), f.train.end());
      all.insert(f.dev.begin(), f.dev.end());
      all.insert(f.test.begin(), f.test.end());
      EXPECT_EQ(all.size(), n);
      EXPECT_EQ(f.train.size() + f.dev.size() + f.test.size(), n);
      tests.insert(f.test.begin(), f.test.end());
    }
    // Each key is tested exactly once.
    EXPECT_EQ(tests.size(), n);
    EXPECT_EQ(std::set<std::string>(tests.begin(), tests.end()).size(), n);
  }
}

TEST(FoldPlan, SixTwoTwoAndRotatingDev) {
  auto plan = make_fold_plan(keys_of(100), 1);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(plan.folds[k].train.size(), 60u);
    EXPECT_EQ(plan.folds[k].dev, plan.folds[(k + 1) % 5].test);
  }
}

TEST(FoldPlan, DependsOnSeedNotInputOrder) {
  auto keys = keys_of(40);
  auto a = make_fold_plan(keys, 7);
  std::reverse(keys.begin(), keys.end());
  auto b = make_fold_plan(keys, 7);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_NE(to_json(a).dump(), to_json(make_fold_plan(keys, 8)).dump());
}

TEST(FoldPlan, RejectsTooFewOrDuplicateKeys) {
  EXPECT_THROW(make_fold_plan(keys_of(4), 1), DataError);
  EXPECT_THROW(make_fold_plan({"a", "b", "c", "d", "e", "a"}, 1), DataError);
}

TEST(BoundedDraw, StaysInRangeAndCoversIt) {
  std::mt19937_64 rng(3);
  std::array<int, 7> hist{};
  for (int i = 0; i < 7000; ++i) {
    auto v = bounded_draw(rng, 7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_GT(h, 850);
}

// Synthetic lexicon plus features whose labels are a linear function of
// the features, so every fold is learnable.
struct Synthetic {
  Lexicon lex;
  FeatureSet features;
};

Synthetic synthetic(const std::string& lang, std::size_t n, std::uint64_t seed, double noise = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Synthetic s;
  s.lex.language = Language(lang);
  s.lex.dimension = Dimension::Power;
  s.features.dim = 4;
  s.features.encoder = "enc";
  for (std::size_t i = 0; i < n; ++i) {
    int c = static_cast<int>(i % 3);
    ConnotationInstance inst;
    inst.instance_id = lang + "-" + std::to_string(i);
    inst.verb_lemma = "v" + std::to_string(i);
    inst.language = s.lex.language;
    inst.dimension = Dimension::Power;
    inst.aggregate_score = c - 1.0;
    inst.label = label_from_class(c);
    s.lex.instances.push_back(inst);
    FeatureRecord r{inst.instance_id, s.lex.language, {}};
    for (int d = 0; d < 4; ++d) r.vector.push_back(static_cast<float>((d == c ? 3.0 : 0.0) + noise * g(rng)));
    s.features.records.push_back(r);
  }
  return s;
}

EvalOptions fast_options() {
  EvalOptions opt;
  opt.train.max_iter = 200;
  opt.train.l2 = 1e-2;
  opt.grid = {{1, 1, 1}, {1, 2, 1}};
  return opt;
}

TEST(LabeledData, MissingFeaturesAreReported) {
  auto s = synthetic("es", 12, 1);
  s.features.records.erase(s.features.records.begin() + 3);
  EXPECT_THROW(make_labeled_data(s.lex, s.features), DataError);
}

TEST(LabeledData, SubsetFollowsRequestedOrder) {
  auto s = synthetic("es", 12, 1);
  auto d = make_labeled_data(s.lex, s.features);
  auto sub = d.subset({"es-5", "es-2"});
  EXPECT_EQ(sub.keys, (std::vector<std::string>{"es-5", "es-2"}));
  EXPECT_EQ(sub.X.row(0), d.X.row(5));
  EXPECT_EQ(sub.y[1], d.y[2]);
}

TEST(Evaluation, SingleLanguageLearnsSeparableTask) {
  auto s = synthetic("es", 60, 2);
  auto d = make_labeled_data(s.lex, s.features);
  auto plan = make_fold_plan(d.keys, 5);
  auto r = run_single_language_eval(d, plan, d, plan, fast_options());
  ASSERT_EQ(r.fold_f1.size(), 5u);
  EXPECT_EQ(r.mean_f1, 1.0);
  EXPECT_EQ(r.chosen_weights.size(), 5u);
}

TEST(Evaluation, AugmentWithNothingEqualsInLanguage) {
  auto s = synthetic("ru", 45, 3, 1.2);
  auto d = make_labeled_data(s.lex, s.features);
  auto plan = make_fold_plan(d.keys, 5);
  auto base = run_single_language_eval(d, plan, d, plan, fast_options());
  LabeledData empty;
  auto aug = run_augmented_eval(d, plan, {{&empty, nullptr}}, fast_options());
  EXPECT_EQ(aug.fold_f1, base.fold_f1);
  EXPECT_TRUE(aug.sources.empty());
}

TEST(Evaluation, CrossLanguageAndAugmentedRun) {
  auto es = synthetic("es", 45, 4, 0.8);
  auto en = synthetic("en", 60, 5, 0.8);
  auto des = make_labeled_data(es.lex, es.features);
  auto den = make_labeled_data(en.lex, en.features);
  auto pes = make_fold_plan(des.keys, 5), pen = make_fold_plan(den.keys, 5);
  auto cross = run_single_language_eval(des, pes, den, pen, fast_options());
  EXPECT_EQ(cross.sources, std::vector<Language>{Language("en")});
  EXPECT_GT(cross.mean_f1, 0.8);
  auto aug = run_augmented_eval(des, pes, {{&den, &pen}}, fast_options());
  EXPECT_EQ(aug.sources, std::vector<Language>{Language("en")});
  auto t = paired_fold_ttest(aug, cross);
  EXPECT_EQ(t.n, 5u);
}

TEST(Evaluation, MtEvalNeedsEveryTestKey) {
  auto es = synthetic("es", 30, 6);
  auto en = synthetic("en", 30, 7);
  auto des = make_labeled_data(es.lex, es.features);
  auto den = make_labeled_data(en.lex, en.features);
  auto pes = make_fold_plan(des.keys, 5), pen = make_fold_plan(den.keys, 5);
  auto models = train_fold_models(den, pen, fast_options());
  FeatureSet translated = es.features;  // translation keeps the target keys
  auto r = run_mt_eval(des, pes, translated, models);
  EXPECT_EQ(r.fold_f1.size(), 5u);
  EXPECT_GT(r.mean_f1, 0.8);
  translated.records.pop_back();
  EXPECT_THROW(run_mt_eval(des, pes, translated, models), DataError);
}

}  // namespace
}  // namespace caa
