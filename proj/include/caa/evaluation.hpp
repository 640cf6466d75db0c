#pragma once

// Fold plans and the evaluation regimes: same/cross-language, augmented
// training, and machine-translated test features.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "caa/classifier.hpp"
#include "caa/error.hpp"
#include "caa/features.hpp"
#include "caa/stats.hpp"
#include "caa/types.hpp"

namespace caa {

/// Labelled feature rows for one (language, dimension).
struct LabeledData {
  Language language;
  Dimension dimension = Dimension::Power;
  std::vector<std::string> keys;
  Eigen::MatrixXd X;
  std::vector<TernaryLabel> y;

  std::size_t size() const { return keys.size(); }
  bool empty() const { return keys.empty(); }

  /// Rows for `wanted`, in that order.
  LabeledData subset(const std::vector<std::string>& wanted) const {
    std::unordered_map<std::string, Eigen::Index> pos;
    for (std::size_t i = 0; i < keys.size(); ++i) pos.emplace(keys[i], static_cast<Eigen::Index>(i));
    LabeledData out{language, dimension, {}, Eigen::MatrixXd(static_cast<Eigen::Index>(wanted.size()), X.cols()), {}};
    for (std::size_t i = 0; i < wanted.size(); ++i) {
      auto it = pos.find(wanted[i]);
      if (it == pos.end()) throw DataError("key '" + wanted[i] + "' is not in the " + language.code() + " data");
      out.keys.push_back(wanted[i]);
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(it->second);
      out.y.push_back(y[static_cast<std::size_t>(it->second)]);
    }
    return out;
  }
};

/// Joins an aggregated lexicon with feature records by instance_id.
inline LabeledData make_labeled_data(const Lexicon& lexicon, const FeatureSet& features) {
  auto idx = features.index();
  LabeledData out;
  out.language = lexicon.language;
  out.dimension = lexicon.dimension;
  out.X.resize(static_cast<Eigen::Index>(lexicon.instances.size()), static_cast<Eigen::Index>(features.dim));
  std::size_t missing = 0;
  std::string first_missing;
  for (const auto& inst : lexicon.instances) {
    if (!inst.label) throw DataError("instance '" + inst.instance_id + "' has no label");
    auto it = idx.find(inst.instance_id);
    if (it == idx.end()) {
      if (missing++ == 0) first_missing = inst.instance_id;
      continue;
    }
    auto row = static_cast<Eigen::Index>(out.keys.size());
    for (std::size_t d = 0; d < features.dim; ++d)
      out.X(row, static_cast<Eigen::Index>(d)) = it->second->vector[d];
    out.keys.push_back(inst.instance_id);
    out.y.push_back(*inst.label);
  }
  if (missing)
    throw DataError(std::to_string(missing) + " " + lexicon_name(lexicon.language, lexicon.dimension) +
                    " instance(s) lack features, e.g. '" + first_missing + "'");
  return out;
}

inline LabeledData concat(const LabeledData& a, const LabeledData& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.X.cols() != b.X.cols()) throw DataError("cannot combine data of different feature dimension");
  LabeledData out{a.language, a.dimension, a.keys, Eigen::MatrixXd(a.X.rows() + b.X.rows(), a.X.cols()), a.y};
  out.X << a.X, b.X;
  out.keys.insert(out.keys.end(), b.keys.begin(), b.keys.end());
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

// ---------------------------------------------------------------------------
// Fold plans

struct Fold {
  std::vector<std::string> train, dev, test;
};

struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<Fold> folds;

  std::size_t size() const { return folds.size(); }
};

/// Uniform integer in [0, n) from a 64-bit engine, without modulo bias.
/// Spelled out so plans are identical across standard libraries.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  while (true) {
    std::uint64_t x = rng();
    if (x >= threshold) return x % n;
  }
}

/// Sorts the keys, shuffles them once with `seed`, and cuts them into
/// `n_folds` contiguous blocks. Fold k tests on block k, tunes on block
/// k+1 (mod n) and trains on the rest (6:2:2 for five folds).
inline FoldPlan make_fold_plan(std::vector<std::string> keys, std::uint64_t seed, std::size_t n_folds = 5) {
  if (n_folds < 3) throw DataError("a fold plan needs at least three folds");
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) throw DataError("duplicate keys in fold plan input");
  if (keys.size() < n_folds)
    throw DataError("cannot split " + std::to_string(keys.size()) + " items into " + std::to_string(n_folds) + " folds");
  std::mt19937_64 rng(seed);
  for (std::size_t i = keys.size(); i > 1; --i) std::swap(keys[i - 1], keys[bounded_draw(rng, i)]);

  std::vector<std::vector<std::string>> blocks(n_folds);
  for (std::size_t b = 0; b < n_folds; ++b) {
    auto lo = b * keys.size() / n_folds, hi = (b + 1) * keys.size() / n_folds;
    blocks[b].assign(keys.begin() + static_cast<std::ptrdiff_t>(lo), keys.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  FoldPlan plan;
  plan.seed = seed;
  for (std::size_t k = 0; k < n_folds; ++k) {
    Fold f;
    f.test = blocks[k];
    f.dev = blocks[(k + 1) % n_folds];
    for (std::size_t b = 0; b < n_folds; ++b)
      if (b != k && b != (k + 1) % n_folds) f.train.insert(f.train.end(), blocks[b].begin(), blocks[b].end());
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

inline nlohmann::ordered_json to_json(const FoldPlan& plan) {
  nlohmann::ordered_json j;
  j["format"] = "caa-fold-plan/1";
  j["seed"] = plan.seed;
  auto& arr = j["folds"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < plan.folds.size(); ++k)
    arr.push_back({{"fold", k}, {"train", plan.folds[k].train}, {"dev", plan.folds[k].dev}, {"test", plan.folds[k].test}});
  return j;
}

// ---------------------------------------------------------------------------
// Evaluation regimes

struct EvalOptions {
  TrainOptions train;
  std::vector<ClassWeights> grid = default_weight_grid();
};

struct EvalResult {
  Language target;
  std::vector<Language> sources;
  Dimension dimension = Dimension::Power;
  std::vector<double> fold_f1;
  double mean_f1 = 0;
  ClassificationReport pooled;  // over all folds' test predictions
  std::vector<ClassWeights> chosen_weights;
};

struct FoldModel {
  ConnotationModel model;
  GridSearchResult search;
};

/// Grid-searches class weights on `dev`, then returns the model trained on
/// `train` with the chosen weights.
inline FoldModel fit_fold(const LabeledData& train_data, const LabeledData& dev, const EvalOptions& opt) {
  auto search = grid_search_class_weights(train_data.X, train_data.y, dev.X, dev.y, opt.grid, opt.train);
  auto model = train(train_data.X, train_data.y, search.best, opt.train, train_data.dimension);
  return {std::move(model), std::move(search)};
}

namespace detail {

inline void check_inputs(const LabeledData& data, const FoldPlan& plan, const char* role) {
  if (data.empty()) throw DataError(std::string("no ") + role + " data");
  if (plan.folds.empty()) throw DataError(std::string("empty fold plan for ") + role + " data");
}

inline EvalResult finish(EvalResult r, const std::vector<TernaryLabel>& pred, const std::vector<TernaryLabel>& gold) {
  double s = 0;
  for (double f : r.fold_f1) s += f;
  r.mean_f1 = s / static_cast<double>(r.fold_f1.size());
  r.pooled = classification_report(pred, gold);
  return r;
}

}  // namespace detail

/// Per source fold, one model trained on source-train and tuned on
/// source-dev.
inline std::vector<FoldModel> train_fold_models(const LabeledData& source, const FoldPlan& plan,
                                                const EvalOptions& opt) {
  detail::check_inputs(source, plan, "source");
  std::vector<FoldModel> out;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    auto fm = fit_fold(source.subset(plan.folds[k].train), source.subset(plan.folds[k].dev), opt);
    fm.model.meta.fold = static_cast<int>(k);
    fm.model.meta.languages = {source.language.code()};
    out.push_back(std::move(fm));
  }
  return out;
}

/// Scores fold k's model on the target's fold-k test set.
inline EvalResult evaluate_fold_models(const std::vector<FoldModel>& models, const LabeledData& target,
                                       const FoldPlan& target_plan, std::vector<Language> sources) {
  detail::check_inputs(target, target_plan, "target");
  if (models.size() != target_plan.size()) throw DataError("fold counts of source and target plans differ");
  EvalResult r;
  r.target = target.language;
  r.sources = std::move(sources);
  r.dimension = target.dimension;
  std::vector<TernaryLabel> all_pred, all_gold;
  for (std::size_t k = 0; k < models.size(); ++k) {
    auto test = target.subset(target_plan.folds[k].test);
    auto pred = models[k].model.predict(test.X);
    r.fold_f1.push_back(macro_f1(pred, test.y));
    r.chosen_weights.push_back(models[k].search.best);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_gold.insert(all_gold.end(), test.y.begin(), test.y.end());
  }
  return detail::finish(std::move(r), all_pred, all_gold);
}

/// Train on the source language (tuning on source-dev), test on the target
/// language's test split. Source and target may be the same data.
inline EvalResult run_single_language_eval(const LabeledData& target, const FoldPlan& target_plan,
                                           const LabeledData& source, const FoldPlan& source_plan,
                                           const EvalOptions& opt = {}) {
  detail::check_inputs(target, target_plan, "target");
  if (source.dimension != target.dimension) throw DataError("source and target dimensions differ");
  auto models = train_fold_models(source, source_plan, opt);
  return evaluate_fold_models(models, target, target_plan, {source.language});
}

struct AugmentSource {
  const LabeledData* data = nullptr;
  const FoldPlan* plan = nullptr;
};

/// Train on target-train plus each added source's train split, tune on
/// target-dev, test on target-test. Sources without data are ignored.
inline EvalResult run_augmented_eval(const LabeledData& target, const FoldPlan& target_plan,
                                     const std::vector<AugmentSource>& added, const EvalOptions& opt = {}) {
  detail::check_inputs(target, target_plan, "target");
  EvalResult r;
  r.target = target.language;
  r.dimension = target.dimension;
  for (const auto& a : added) {
    if (!a.data || a.data->empty()) continue;
    if (!a.plan || a.plan->size() != target_plan.size())
      throw DataError("augmentation source " + a.data->language.code() + " lacks a matching fold plan");
    if (a.data->dimension != target.dimension) throw DataError("augmentation source has another dimension");
    r.sources.push_back(a.data->language);
  }
  std::vector<TernaryLabel> all_pred, all_gold;
  for (std::size_t k = 0; k < target_plan.size(); ++k) {
    auto train_data = target.subset(target_plan.folds[k].train);
    for (const auto& a : added)
      if (a.data && !a.data->empty()) train_data = concat(train_data, a.data->subset(a.plan->folds[k].train));
    auto fm = fit_fold(train_data, target.subset(target_plan.folds[k].dev), opt);
    auto test = target.subset(target_plan.folds[k].test);
    auto pred = fm.model.predict(test.X);
    r.fold_f1.push_back(macro_f1(pred, test.y));
    r.chosen_weights.push_back(fm.search.best);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_gold.insert(all_gold.end(), test.y.begin(), test.y.end());
  }
  return detail::finish(std::move(r), all_pred, all_gold);
}

/// Scores English-trained fold models on translated features of the
/// target's test sentences, against the target's gold labels.
inline EvalResult run_mt_eval(const LabeledData& target, const FoldPlan& target_plan,
                              const FeatureSet& translated, const std::vector<FoldModel>& english_models) {
  detail::check_inputs(target, target_plan, "target");
  if (english_models.size() != target_plan.size()) throw DataError("fold counts of English models and target plan differ");
  auto idx = translated.index();
  EvalResult r;
  r.target = target.language;
  r.sources = {Language("en")};
  r.dimension = target.dimension;
  std::vector<TernaryLabel> all_pred, all_gold;
  for (std::size_t k = 0; k < target_plan.size(); ++k) {
    auto gold = target.subset(target_plan.folds[k].test);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(gold.size()), static_cast<Eigen::Index>(translated.dim));
    for (std::size_t i = 0; i < gold.size(); ++i) {
      auto it = idx.find(gold.keys[i]);
      if (it == idx.end())
        throw DataError("translated features lack target test key '" + gold.keys[i] + "'");
      for (std::size_t d = 0; d < translated.dim; ++d)
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = it->second->vector[d];
    }
    auto pred = english_models[k].model.predict(X);
    r.fold_f1.push_back(macro_f1(pred, gold.y));
    r.chosen_weights.push_back(english_models[k].search.best);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_gold.insert(all_gold.end(), gold.y.begin(), gold.y.end());
  }
  return detail::finish(std::move(r), all_pred, all_gold);
}

/// Two-sided paired t-test over per-fold macro-F1 (a - b), df = folds - 1.
inline stats::TTestResult paired_fold_ttest(const EvalResult& a, const EvalResult& b) {
  if (a.fold_f1.size() != b.fold_f1.size()) throw DataError("results have different fold counts");
  return stats::paired_ttest(a.fold_f1, b.fold_f1);
}

}  // namespace caa
