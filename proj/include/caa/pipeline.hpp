#pragma once

// Pipeline stages behind the command-line tool. Each stage reads the
// configured inputs and earlier stages' outputs under the output directory,
// writes its own outputs, and records them in `<dir>/<stage>.manifest.json`.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "caa/affect.hpp"
#include "caa/agreement.hpp"
#include "caa/classifier.hpp"
#include "caa/config.hpp"
#include "caa/context_analysis.hpp"
#include "caa/corpus.hpp"
#include "caa/evaluation.hpp"
#include "caa/features.hpp"
#include "caa/lexicon.hpp"
#include "caa/matching.hpp"
#include "caa/text.hpp"

namespace caa {

/// A stage needs the outputs of an earlier stage that has not been run (or
/// was run under another configuration).
class MissingStageError : public Error {
 public:
  MissingStageError(std::string stage, const std::string& what) : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> s = {
      "ingest", "aggregate", "agreement", "context-loss", "translation-loss", "train", "eval", "mt-eval",
      "augment-eval", "build-corpus", "match", "score", "report", "rank-imbalance", "extract-tuples"};
  return s;
}

inline std::string stage_dir(const std::string& stage) {
  static const std::map<std::string, std::string> dirs = {
      {"ingest", "ingested"},        {"aggregate", "lexicons"},   {"agreement", "analysis"},
      {"context-loss", "analysis"},  {"translation-loss", "analysis"}, {"train", "models"},
      {"eval", "eval"},              {"mt-eval", "eval"},         {"augment-eval", "eval"},
      {"build-corpus", "corpus"},    {"match", "matching"},       {"score", "scores"},
      {"report", "reports"},         {"rank-imbalance", "reports"}, {"extract-tuples", "tuples"}};
  auto it = dirs.find(stage);
  if (it == dirs.end()) throw Error("unknown stage '" + stage + "'");
  return it->second;
}

inline std::filesystem::path manifest_path(const PipelineConfig& cfg, const std::string& stage) {
  return cfg.output_dir / stage_dir(stage) / (stage + ".manifest.json");
}

/// Bookkeeping for one stage run: inputs and outputs with checksums.
class StageRun {
 public:
  StageRun(const PipelineConfig& cfg, std::string stage)
      : cfg_(cfg), stage_(std::move(stage)), hash_(cfg.hash()), dir_(cfg.output_dir / stage_dir(stage_)) {
    std::filesystem::create_directories(dir_);
  }

  const std::string& hash() const noexcept { return hash_; }
  const PipelineConfig& cfg() const noexcept { return cfg_; }
  std::filesystem::path out(const std::string& rel) const { return cfg_.output_dir / rel; }

  /// Fails unless `stage` has written a manifest under this configuration.
  void require(const std::string& stage) {
    auto p = manifest_path(cfg_, stage);
    if (!std::filesystem::is_regular_file(p))
      throw MissingStageError(stage, "stage '" + stage_ + "' needs the outputs of stage '" + stage +
                                         "', which has not been run (no " + p.string() + ")");
    std::ifstream in(p);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("config_hash", "") != hash_)
      throw MissingStageError(stage, "stage '" + stage + "' was run under a different configuration; rerun it before '" +
                                         stage_ + "'");
  }

  void input(const std::filesystem::path& p) { inputs_.insert(p.lexically_normal()); }

  std::filesystem::path input_from(const std::string& rel) {
    auto p = out(rel);
    if (!std::filesystem::is_regular_file(p)) throw DataError("expected file " + p.string() + " is missing");
    input(p);
    return p;
  }

  /// Writes `content` to `<output_dir>/rel` and records it.
  void write(const std::string& rel, const std::string& content) {
    auto p = out(rel);
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    f << content;
    if (!f) throw Error("write to '" + p.string() + "' failed");
    outputs_.insert(rel);
  }

  void write_json(const std::string& rel, nlohmann::ordered_json j) {
    j["config_hash"] = hash_;
    write(rel, j.dump(2) + "\n");
  }

  /// Records a file written by other means (model and feature writers).
  void record(const std::string& rel) { outputs_.insert(rel); }

  void finish() {
    nlohmann::ordered_json m;
    m["stage"] = stage_;
    m["config_hash"] = hash_;
    m["seed"] = cfg_.seed;
    m["created"] = now_utc();
    auto& ins = m["inputs"] = nlohmann::ordered_json::array();
    for (const auto& p : inputs_) ins.push_back({{"path", display(p)}, {"sha256", sha256_file(p)}});
    auto& outs = m["outputs"] = nlohmann::ordered_json::array();
    for (const auto& rel : outputs_) outs.push_back({{"path", rel}, {"sha256", sha256_file(out(rel))}});
    std::ofstream f(manifest_path(cfg_, stage_), std::ios::binary | std::ios::trunc);
    f << m.dump(2) << "\n";
    if (!f) throw Error("cannot write manifest for stage '" + stage_ + "'");
  }

  const std::set<std::string>& outputs() const noexcept { return outputs_; }

 private:
  static std::string now_utc() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::string display(const std::filesystem::path& p) const {
    for (const auto& [base, prefix] : {std::pair{cfg_.output_dir, std::string("output:")},
                                       std::pair{cfg_.config_dir, std::string()}}) {
      auto rel = p.lexically_relative(base.lexically_normal());
      if (!rel.empty() && *rel.begin() != "..") return prefix + rel.generic_string();
    }
    return p.generic_string();
  }

  const PipelineConfig& cfg_;
  std::string stage_;
  std::string hash_;
  std::filesystem::path dir_;
  std::set<std::filesystem::path> inputs_;
  std::set<std::string> outputs_;
};

namespace detail {

/// CSV text whose first column is the config hash.
class CsvText {
 public:
  CsvText(std::string hash, std::vector<std::string> header) : hash_(std::move(hash)) {
    header.insert(header.begin(), "config_hash");
    text::write_row(out_, header);
  }
  void row(std::vector<std::string> cells) {
    cells.insert(cells.begin(), hash_);
    text::write_row(out_, cells);
  }
  std::string str() const { return out_.str(); }

 private:
  std::string hash_;
  std::ostringstream out_;
};

inline std::string num(double v) { return text::format_number(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }
inline std::string flag(bool b) { return b ? "true" : "false"; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline std::string lexicon_file(const Language& l, Dimension d) { return lexicon_name(l, d) + ".json"; }

/// Lexicons of run languages present under `dir`, language-major.
inline std::vector<Lexicon> load_lexicons(StageRun& run, const std::string& dir) {
  std::vector<Lexicon> out;
  for (const auto& l : run.cfg().languages)
    for (auto d : kAllDimensions) {
      auto rel = dir + "/" + lexicon_file(l, d);
      if (!std::filesystem::is_regular_file(run.out(rel))) continue;
      out.push_back(lexicon_from_json(read_json(run.input_from(rel))));
    }
  if (out.empty()) throw DataError("no lexicons for the run languages under " + run.out(dir).string());
  return out;
}

inline const Lexicon* find_lexicon(const std::vector<Lexicon>& lexs, const Language& l, Dimension d) {
  for (const auto& x : lexs)
    if (x.language == l && x.dimension == d) return &x;
  return nullptr;
}

inline FeatureSet load_feature_set(StageRun& run, const std::filesystem::path& p) {
  run.input(p);
  return concatenate({read_features(p.string())});
}

inline EvalOptions eval_options(const PipelineConfig& cfg) {
  EvalOptions o;
  o.train = cfg.train;
  o.grid = cfg.weight_grid;
  return o;
}

inline std::string model_dir(const Language& l, Dimension d) { return "models/" + lexicon_name(l, d); }

/// Labelled data of one (language, dimension) with its fold plan.
struct Split {
  LabeledData data;
  FoldPlan plan;
};

class DataCache {
 public:
  explicit DataCache(StageRun& run) : run_(run) {}

  const Split& split(const Language& l, Dimension d) {
    auto key = std::make_pair(l, d);
    if (auto it = splits_.find(key); it != splits_.end()) return it->second;
    const auto& lex = lexicon(l, d);
    auto data = make_labeled_data(lex, features(l));
    auto plan = make_fold_plan(data.keys, run_.cfg().seed, run_.cfg().folds);
    return splits_.emplace(key, Split{std::move(data), std::move(plan)}).first->second;
  }

  bool has(const Language& l, Dimension d) const {
    return std::filesystem::is_regular_file(run_.out("lexicons/" + lexicon_file(l, d)));
  }

  const Lexicon& lexicon(const Language& l, Dimension d) {
    auto key = std::make_pair(l, d);
    if (auto it = lexicons_.find(key); it != lexicons_.end()) return it->second;
    auto lex = lexicon_from_json(read_json(run_.input_from("lexicons/" + lexicon_file(l, d))));
    return lexicons_.emplace(key, std::move(lex)).first->second;
  }

  const FeatureSet& features(const Language& l) {
    if (auto it = features_.find(l); it != features_.end()) return it->second;
    return features_.emplace(l, load_feature_set(run_, run_.cfg().path("features", l))).first->second;
  }

  /// Fold models written by the train stage.
  const std::vector<FoldModel>& fold_models(const Language& l, Dimension d) {
    auto key = std::make_pair(l, d);
    if (auto it = models_.find(key); it != models_.end()) return it->second;
    std::vector<FoldModel> ms;
    for (std::size_t k = 0; k < run_.cfg().folds; ++k) {
      auto p = run_.input_from(model_dir(l, d) + "/fold" + std::to_string(k) + ".caamodel");
      FoldModel fm;
      fm.model = read_model(p.string());
      fm.search.best = fm.model.class_weights;
      ms.push_back(std::move(fm));
    }
    return models_.emplace(key, std::move(ms)).first->second;
  }

 private:
  StageRun& run_;
  std::map<std::pair<Language, Dimension>, Split> splits_;
  std::map<std::pair<Language, Dimension>, Lexicon> lexicons_;
  std::map<Language, FeatureSet> features_;
  std::map<std::pair<Language, Dimension>, std::vector<FoldModel>> models_;
};

inline void fold_rows(CsvText& csv, const std::vector<std::string>& prefix, const EvalResult& r) {
  for (std::size_t k = 0; k < r.fold_f1.size(); ++k) {
    auto cells = prefix;
    cells.push_back(std::to_string(k));
    cells.push_back(num(r.fold_f1[k]));
    csv.row(cells);
  }
  auto cells = prefix;
  cells.push_back("mean");
  cells.push_back(num(r.mean_f1));
  csv.row(cells);
}

inline nlohmann::ordered_json result_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["target"] = r.target.code();
  std::vector<std::string> src;
  for (const auto& s : r.sources) src.push_back(s.code());
  j["sources"] = src;
  j["dimension"] = to_string(r.dimension);
  j["fold_macro_f1"] = r.fold_f1;
  j["mean_macro_f1"] = r.mean_f1;
  j["chosen_class_weights"] = r.chosen_weights;
  auto& pc = j["per_class"] = nlohmann::ordered_json::object();
  for (auto l : kAllLabels) {
    const auto& m = r.pooled.per_class[static_cast<std::size_t>(class_index(l))];
    pc[std::string(to_string(l))] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  return j;
}

inline std::vector<std::string> test_cells(const stats::TTestResult& t) {
  return {num(t.t), num(t.p), flag(t.zero_variance)};
}

// Kept corpus entries, re-read from the dump and restricted to the ids the
// build-corpus stage kept.
inline std::vector<BiographyEntry> load_kept(StageRun& run) {
  auto kept_json = read_json(run.input_from("corpus/kept.json"));
  std::set<std::string> ids;
  for (const auto& e : kept_json.at("entries")) ids.insert(e.at("person_id").get<std::string>());
  auto corpus = run.cfg().path("corpus");
  run.input(corpus);
  std::vector<BiographyEntry> out;
  for (auto& e : read_corpus_file(corpus.string()))
    if (ids.count(e.person_id)) out.push_back(std::move(e));
  if (out.size() != ids.size()) throw DataError("corpus dump no longer contains every kept entry; rerun build-corpus");
  return out;
}

inline ScoreTable load_scores(StageRun& run) {
  auto p = run.input_from("scores/entity_scores.csv");
  auto t = text::read_table_file(p.string(), ',');
  const auto c_id = t.column("person_id", p.string());
  const auto c_lang = t.column("language", p.string());
  const auto c_dim = t.column("dimension", p.string());
  const auto c_mean = t.column("mean", p.string());
  const auto c_n = t.column("n_verbs", p.string());
  ScoreTable s;
  for (const auto& r : t.rows)
    s.scores.push_back({r.cells[c_id], Language(r.cells[c_lang]), parse_dimension(r.cells[c_dim]),
                        text::parse_double(r.cells[c_mean]), static_cast<std::size_t>(text::parse_int(r.cells[c_n]))});
  return s;
}

inline std::vector<MatchedPair> load_pairs(StageRun& run) {
  auto p = run.input_from("matching/pairs.csv");
  auto t = text::read_table_file(p.string(), ',');
  const auto c_t = t.column("treatment_id", p.string());
  const auto c_c = t.column("control_id", p.string());
  const auto c_s = t.column("similarity", p.string());
  const auto c_f = t.column("below_floor", p.string());
  std::vector<MatchedPair> out;
  for (const auto& r : t.rows)
    out.push_back({r.cells[c_t], r.cells[c_c], text::parse_double(r.cells[c_s]), text::parse_flag(r.cells[c_f])});
  return out;
}

inline std::string sentence_text(const conllu::Sentence& s) {
  if (!s.text.empty()) return s.text;
  std::vector<std::string> forms;
  for (const auto& t : s.tokens) forms.push_back(t.form);
  return text::join(forms, " ");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lexicon stages

inline void run_ingest(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "ingest");
  StageRun run(cfg, "ingest");
  auto src = cfg.path("annotations");
  run.input(src);
  auto table = text::read_table_file(src.string(), '\t');
  std::vector<Lexicon> lexicons;
  for (auto& lex : ingest_judgements(table, cfg.values.at("paths.annotations")))
    if (std::find(cfg.languages.begin(), cfg.languages.end(), lex.language) != cfg.languages.end())
      lexicons.push_back(std::move(lex));
  if (lexicons.empty()) throw DataError("no annotations for the run languages in " + src.string());
  std::map<std::string, std::size_t> before;
  for (const auto& l : lexicons) before[lexicon_name(l.language, l.dimension)] = l.instances.size();

  auto filtered = filter_annotators(std::move(lexicons));
  nlohmann::ordered_json summary;
  summary["mean_rate"] = filtered.report.mean_rate;
  summary["sd_rate"] = filtered.report.sd_rate;
  summary["threshold"] = filtered.report.threshold;
  summary["annotators"] = filtered.report.annotators.size();
  summary["removed"] = filtered.report.removed;
  auto& per = summary["lexicons"] = nlohmann::ordered_json::array();
  for (const auto& lex : filtered.lexicons) {
    auto name = lexicon_name(lex.language, lex.dimension);
    run.write_json("ingested/" + detail::lexicon_file(lex.language, lex.dimension), to_json(lex));
    per.push_back({{"lexicon", name}, {"instances_in", before[name]}, {"instances_kept", lex.instances.size()}});
  }
  detail::CsvText ann(run.hash(), {"annotator_id", "judged", "disagreements", "rate", "removed"});
  for (const auto& a : filtered.report.annotators)
    ann.row({a.annotator_id, detail::num(a.judged), detail::num(a.disagreements), detail::num(a.rate), detail::flag(a.removed)});
  run.write("ingested/annotators.csv", ann.str());
  detail::CsvText dropped(run.hash(), {"lexicon", "instance_id"});
  for (const auto& [lex, id] : filtered.report.dropped_instances) dropped.row({lex, id});
  run.write("ingested/dropped.csv", dropped.str());
  run.write_json("ingested/summary.json", summary);
  run.finish();
}

inline void run_aggregate(const PipelineConfig& cfg) {
  StageRun run(cfg, "aggregate");
  run.require("ingest");
  detail::CsvText labels(run.hash(), {"language", "dimension", "instances", "negative", "neutral", "positive"});
  for (auto& lex : detail::load_lexicons(run, "ingested")) {
    auto agg = aggregate_and_ternarize(std::move(lex));
    std::array<std::size_t, 3> counts{};
    for (const auto& inst : agg.instances) ++counts[static_cast<std::size_t>(class_index(*inst.label))];
    labels.row({agg.language.code(), std::string(to_string(agg.dimension)), detail::num(agg.instances.size()),
                detail::num(counts[0]), detail::num(counts[1]), detail::num(counts[2])});
    run.write_json("lexicons/" + detail::lexicon_file(agg.language, agg.dimension), to_json(agg));
  }
  run.write("lexicons/labels.csv", labels.str());
  run.finish();
}

inline void run_agreement(const PipelineConfig& cfg) {
  StageRun run(cfg, "agreement");
  run.require("aggregate");
  detail::CsvText csv(run.hash(), {"language", "dimension", "instances", "alpha_interval", "interval_degenerate",
                                   "alpha_nominal", "nominal_degenerate", "pairwise_agreement",
                                   "pairwise_agreement_polar_only"});
  for (const auto& lex : detail::load_lexicons(run, "lexicons")) {
    auto ai = krippendorff_alpha(lex, AlphaMetric::Interval);
    auto an = krippendorff_alpha(lex, AlphaMetric::Nominal);
    csv.row({lex.language.code(), std::string(to_string(lex.dimension)), detail::num(lex.instances.size()),
             detail::num(ai.alpha), detail::flag(ai.degenerate), detail::num(an.alpha), detail::flag(an.degenerate),
             detail::num(pairwise_agreement(lex, false)), detail::num(pairwise_agreement(lex, true))});
  }
  run.write("analysis/agreement.csv", csv.str());
  run.finish();
}

inline void run_context_loss(const PipelineConfig& cfg) {
  StageRun run(cfg, "context-loss");
  run.require("aggregate");
  detail::CsvText csv(run.hash(), {"language", "dimension", "instances", "verbs", "context_loss_percent"});
  for (const auto& lex : detail::load_lexicons(run, "lexicons"))
    csv.row({lex.language.code(), std::string(to_string(lex.dimension)), detail::num(lex.instances.size()),
             detail::num(decontextualize(lex).size()), detail::num(context_loss(lex))});
  run.write("analysis/context_loss.csv", csv.str());
  run.finish();
}

inline void run_translation_loss(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "translation-loss");
  StageRun run(cfg, "translation-loss");
  run.require("aggregate");
  auto tp = cfg.path("translation_table");
  run.input(tp);
  auto table = read_translation_table(text::read_table_file(tp.string(), '\t'), cfg.values.at("paths.translation_table"));
  auto lexicons = detail::load_lexicons(run, "lexicons");
  detail::CsvText csv(run.hash(), {"source_language", "dimension", "translated_verbs", "translation_loss_percent"});
  const Language en("en");
  for (const auto& l : cfg.languages) {
    if (l == en) continue;
    for (auto d : kAllDimensions) {
      const auto* src = detail::find_lexicon(lexicons, l, d);
      const auto* eng = detail::find_lexicon(lexicons, en, d);
      if (!src || !eng) continue;
      auto loss = translation_loss(*src, *eng, table);
      csv.row({l.code(), std::string(to_string(d)), detail::num(loss.n_verbs), detail::num(loss.percent)});
    }
  }
  run.write("analysis/translation_loss.csv", csv.str());
  run.finish();
}

// ---------------------------------------------------------------------------
// Classifier stages

/// The most frequent triple; ties go to the lexicographically smaller one.
inline ClassWeights modal_weights(const std::vector<ClassWeights>& chosen) {
  if (chosen.empty()) throw DataError("no fold choices to take the mode of");
  std::map<ClassWeights, std::size_t> counts;
  for (const auto& w : chosen) ++counts[w];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

inline void run_train(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "train");
  StageRun run(cfg, "train");
  run.require("aggregate");
  detail::DataCache cache(run);
  auto opt = detail::eval_options(cfg);
  detail::CsvText grid(run.hash(), {"language", "dimension", "fold", "w_negative", "w_neutral", "w_positive", "dev_macro_f1", "chosen"});
  detail::CsvText summary(run.hash(), {"language", "dimension", "model", "class_weights", "iterations", "converged", "final_loss"});
  auto note = [&](const Language& l, Dimension d, const std::string& name, const ConnotationModel& m) {
    summary.row({l.code(), std::string(to_string(d)), name,
                 detail::num(m.class_weights[0]) + " " + detail::num(m.class_weights[1]) + " " + detail::num(m.class_weights[2]),
                 std::to_string(m.meta.iterations), detail::flag(m.meta.converged), detail::num(m.meta.final_loss)});
  };
  for (const auto& l : cfg.languages)
    for (auto d : kAllDimensions) {
      if (!cache.has(l, d)) continue;
      const auto& split = cache.split(l, d);
      auto dir = detail::model_dir(l, d);
      auto plan_json = to_json(split.plan);
      run.write_json(dir + "/plan.json", plan_json);
      auto models = train_fold_models(split.data, split.plan, opt);
      std::vector<ClassWeights> chosen;
      for (std::size_t k = 0; k < models.size(); ++k) {
        auto& m = models[k].model;
        m.meta.config_hash = run.hash();
        auto rel = dir + "/fold" + std::to_string(k) + ".caamodel";
        std::filesystem::create_directories(run.out(dir));
        write_model(m, run.out(rel).string());
        run.record(rel);
        note(l, d, "fold" + std::to_string(k), m);
        chosen.push_back(models[k].search.best);
        for (const auto& [w, f1] : models[k].search.scores)
          grid.row({l.code(), std::string(to_string(d)), std::to_string(k), detail::num(w[0]), detail::num(w[1]),
                    detail::num(w[2]), detail::num(f1), detail::flag(w == models[k].search.best)});
      }
      if (std::find(kScoredDimensions.begin(), kScoredDimensions.end(), d) == kScoredDimensions.end()) continue;
      // Corpus scoring model: all labelled data of the language plus the
      // augmentation languages, at the modal fold weights.
      auto data = split.data;
      std::vector<std::string> langs = {l.code()};
      for (const auto& a : cfg.augment_languages) {
        if (a == l || !cache.has(a, d)) continue;
        data = concat(data, cache.split(a, d).data);
        langs.push_back(a.code());
      }
      auto m = train(data.X, data.y, modal_weights(chosen), cfg.train, d);
      m.meta.languages = langs;
      m.meta.config_hash = run.hash();
      auto rel = dir + "/scoring.caamodel";
      write_model(m, run.out(rel).string());
      run.record(rel);
      note(l, d, "scoring", m);
    }
  run.write("models/grid_search.csv", grid.str());
  run.write("models/models.csv", summary.str());
  run.finish();
}

struct EvalFilter {
  std::optional<Language> target;
  std::optional<Language> source;
};

inline void run_eval(const PipelineConfig& cfg, const EvalFilter& filter = {}) {
  validate_for_stage(cfg, "train");
  StageRun run(cfg, "eval");
  run.require("train");
  detail::DataCache cache(run);
  for (const auto* l : {&filter.target, &filter.source})
    if (*l && std::find(cfg.languages.begin(), cfg.languages.end(), **l) == cfg.languages.end())
      throw DataError("language '" + (*l)->code() + "' is not a run language");
  detail::CsvText folds(run.hash(), {"dimension", "source", "target", "fold", "macro_f1"});
  detail::CsvText tests(run.hash(), {"dimension", "source", "target", "mean_macro_f1", "in_language_mean_macro_f1", "t", "p", "zero_variance"});
  nlohmann::ordered_json details = nlohmann::ordered_json::array();
  for (auto d : kAllDimensions)
    for (const auto& t : cfg.languages) {
      if (filter.target && *filter.target != t) continue;
      if (!cache.has(t, d)) continue;
      const auto& target = cache.split(t, d);
      std::optional<EvalResult> in_language;
      for (const auto& s : cfg.languages) {
        if (filter.source && *filter.source != s) continue;
        if (!cache.has(s, d)) continue;
        auto r = evaluate_fold_models(cache.fold_models(s, d), target.data, target.plan, {s});
        detail::fold_rows(folds, {std::string(to_string(d)), s.code(), t.code()}, r);
        details.push_back(detail::result_json(r));
        if (s == t) continue;
        if (!in_language) in_language = evaluate_fold_models(cache.fold_models(t, d), target.data, target.plan, {t});
        auto cells = std::vector<std::string>{std::string(to_string(d)), s.code(), t.code(), detail::num(r.mean_f1),
                                              detail::num(in_language->mean_f1)};
        for (auto& c : detail::test_cells(paired_fold_ttest(r, *in_language))) cells.push_back(c);
        tests.row(cells);
      }
    }
  run.write("eval/cross_language.csv", folds.str());
  run.write("eval/cross_language_tests.csv", tests.str());
  run.write_json("eval/cross_language.json", {{"results", details}});
  run.finish();
}

inline void run_mt_eval(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "train");
  validate_for_stage(cfg, "mt-eval");
  StageRun run(cfg, "mt-eval");
  run.require("train");
  detail::DataCache cache(run);
  const Language en("en");
  detail::CsvText folds(run.hash(), {"dimension", "target", "regime", "fold", "macro_f1"});
  detail::CsvText tests(run.hash(), {"dimension", "target", "in_language_mean_macro_f1", "mt_mean_macro_f1", "t", "p",
                                     "zero_variance", "mt_strictly_worse"});
  nlohmann::ordered_json details = nlohmann::ordered_json::array();
  for (const auto& t : cfg.languages) {
    if (t == en) continue;
    auto translated = detail::load_feature_set(run, cfg.path("translated_features", t));
    for (auto d : kAllDimensions) {
      if (!cache.has(t, d) || !cache.has(en, d)) continue;
      const auto& target = cache.split(t, d);
      auto base = evaluate_fold_models(cache.fold_models(t, d), target.data, target.plan, {t});
      auto mt = run_mt_eval(target.data, target.plan, translated, cache.fold_models(en, d));
      detail::fold_rows(folds, {std::string(to_string(d)), t.code(), "in-language"}, base);
      detail::fold_rows(folds, {std::string(to_string(d)), t.code(), "machine-translated"}, mt);
      details.push_back(detail::result_json(mt));
      auto cells = std::vector<std::string>{std::string(to_string(d)), t.code(), detail::num(base.mean_f1), detail::num(mt.mean_f1)};
      for (auto& c : detail::test_cells(paired_fold_ttest(base, mt))) cells.push_back(c);
      cells.push_back(detail::flag(mt.mean_f1 < base.mean_f1));
      tests.row(cells);
    }
  }
  run.write("eval/mt.csv", folds.str());
  run.write("eval/mt_tests.csv", tests.str());
  run.write_json("eval/mt.json", {{"results", details}});
  run.finish();
}

inline void run_augment_eval(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "augment-eval");
  StageRun run(cfg, "augment-eval");
  run.require("train");
  detail::DataCache cache(run);
  auto opt = detail::eval_options(cfg);
  detail::CsvText folds(run.hash(), {"dimension", "target", "training_languages", "fold", "macro_f1"});
  detail::CsvText tests(run.hash(), {"dimension", "target", "training_languages", "in_language_mean_macro_f1",
                                     "augmented_mean_macro_f1", "t", "p", "zero_variance"});
  nlohmann::ordered_json details = nlohmann::ordered_json::array();
  for (auto d : kAllDimensions)
    for (const auto& t : cfg.languages) {
      if (!cache.has(t, d)) continue;
      std::vector<AugmentSource> added;
      std::string langs = t.code();
      for (const auto& a : cfg.augment_languages) {
        if (a == t || !cache.has(a, d)) continue;
        const auto& s = cache.split(a, d);
        added.push_back({&s.data, &s.plan});
        langs += "+" + a.code();
      }
      if (added.empty()) continue;
      const auto& target = cache.split(t, d);
      auto base = evaluate_fold_models(cache.fold_models(t, d), target.data, target.plan, {t});
      auto aug = run_augmented_eval(target.data, target.plan, added, opt);
      detail::fold_rows(folds, {std::string(to_string(d)), t.code(), t.code()}, base);
      detail::fold_rows(folds, {std::string(to_string(d)), t.code(), langs}, aug);
      details.push_back(detail::result_json(aug));
      auto cells = std::vector<std::string>{std::string(to_string(d)), t.code(), langs, detail::num(base.mean_f1),
                                            detail::num(aug.mean_f1)};
      for (auto& c : detail::test_cells(paired_fold_ttest(aug, base))) cells.push_back(c);
      tests.row(cells);
    }
  run.write("eval/augment.csv", folds.str());
  run.write("eval/augment_tests.csv", tests.str());
  run.write_json("eval/augment.json", {{"results", details}});
  run.finish();
}

// ---------------------------------------------------------------------------
// Corpus stages

inline void run_build_corpus(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "build-corpus");
  StageRun run(cfg, "build-corpus");
  auto cp = cfg.path("corpus");
  run.input(cp);
  auto outcome = filter_entries(read_corpus_file(cp.string()), cfg.languages, cfg.detection);

  std::vector<std::string> header = {"person_id", "kept", "reason"};
  for (const auto& l : cfg.languages) {
    header.push_back("analyzable_" + l.code());
    header.push_back("pronoun_" + l.code());
  }
  detail::CsvText filter(run.hash(), header);
  for (const auto& d : outcome.decisions) {
    std::vector<std::string> cells = {d.person_id, detail::flag(d.kept), d.reason};
    for (const auto& l : cfg.languages) {
      auto a = d.analyzable.find(l);
      auto p = d.pronouns.find(l);
      cells.push_back(a == d.analyzable.end() ? "" : detail::num(a->second));
      cells.push_back(p == d.pronouns.end() ? "" : std::string(to_string(p->second)));
    }
    filter.row(cells);
  }
  run.write("corpus/filter.csv", filter.str());

  nlohmann::ordered_json kept = nlohmann::ordered_json::array();
  std::string requests;
  for (const auto& e : outcome.kept) {
    nlohmann::ordered_json je;
    je["person_id"] = e.person_id;
    je["group"] = to_string(e.group);
    je["categories"] = e.categories;
    je["attributes"] = {{"nationality", e.attributes.nationality},
                        {"birth_year", e.attributes.birth_year ? nlohmann::ordered_json(*e.attributes.birth_year)
                                                               : nlohmann::ordered_json(nullptr)},
                        {"occupation", e.attributes.occupation}};
    auto& arts = je["articles"] = nlohmann::ordered_json::object();
    for (const auto& l : cfg.languages) {
      const auto& a = *e.article(l);
      auto pronoun = infer_pronoun(a, cfg.detection.pronouns);
      auto slots = select_sentences(a, pronoun, cfg.detection);
      arts[l.code()] = {{"title", a.title}, {"url", a.url}, {"pronoun", to_string(pronoun)}, {"subject_verbs", slots.size()}};
      for (const auto& v : slots) {
        const auto& s = a.sentences[v.sentence];
        std::vector<std::string> tokens;
        for (const auto& t : s.tokens) tokens.push_back(t.form);
        nlohmann::ordered_json r;
        r["key"] = corpus_feature_key(e.person_id, l, v);
        r["sentence"] = detail::sentence_text(s);
        r["tokens"] = tokens;
        r["verb_token_index"] = v.verb;
        r["language"] = l.code();
        r["config_hash"] = run.hash();
        requests += r.dump() + "\n";
      }
    }
    kept.push_back(std::move(je));
  }
  run.write_json("corpus/kept.json", {{"entries", kept}});
  run.write("corpus/requests.jsonl", requests);
  run.finish();
}

inline void run_match(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "match");
  StageRun run(cfg, "match");
  run.require("build-corpus");
  auto entries = detail::load_kept(run);
  auto xp = cfg.path("exclusion_list");
  run.input(xp);
  auto excluded = read_word_list_file(xp.string(), false);

  std::vector<const BiographyEntry*> treatment, candidates, all;
  std::vector<std::string> tids, cids;
  for (const auto& e : entries) {
    all.push_back(&e);
    (e.group == Group::Treatment ? treatment : candidates).push_back(&e);
    (e.group == Group::Treatment ? tids : cids).push_back(e.person_id);
  }
  if (treatment.empty()) throw DataError("no treatment entries survived corpus filtering");
  auto tuning = tune_slope(treatment, candidates, excluded, cfg.slope_grid, cfg.pivot, cfg.match);
  double slope = cfg.slope ? *cfg.slope : tuning.best_slope;
  auto vectors = build_category_vectors(all, excluded, cfg.pivot, slope);
  auto pairs = match_controls(tids, cids, vectors, cfg.match);

  detail::CsvText pcsv(run.hash(), {"treatment_id", "control_id", "similarity", "slope", "pivot", "below_floor"});
  std::size_t below = 0;
  for (const auto& p : pairs) {
    below += p.below_floor;
    pcsv.row({p.treatment_id, p.control_id, detail::num(p.similarity), detail::num(slope), detail::num(vectors.pivot),
              detail::flag(p.below_floor)});
  }
  run.write("matching/pairs.csv", pcsv.str());
  detail::CsvText tcsv(run.hash(), {"slope", "gap", "mean_treatment_categories", "mean_control_categories", "selected"});
  for (const auto& t : tuning.trials)
    tcsv.row({detail::num(t.slope), detail::num(t.gap), detail::num(t.mean_treatment), detail::num(t.mean_control),
              detail::flag(t.slope == slope)});
  run.write("matching/slope_tuning.csv", tcsv.str());
  run.write_json("matching/summary.json", {{"similarity", to_string(cfg.match.similarity)},
                                           {"pivot", vectors.pivot},
                                           {"slope", slope},
                                           {"slope_source", cfg.slope ? "config" : "tuned"},
                                           {"treatment", tids.size()},
                                           {"candidates", cids.size()},
                                           {"pairs", pairs.size()},
                                           {"below_floor", below}});
  run.finish();
}

inline void run_score(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "score");
  StageRun run(cfg, "score");
  run.require("build-corpus");
  run.require("train");
  auto entries = detail::load_kept(run);
  detail::CsvText scores(run.hash(), {"person_id", "group", "language", "dimension", "mean", "n_verbs"});
  detail::CsvText unscored(run.hash(), {"person_id", "language", "pronoun"});
  for (const auto& l : cfg.languages) {
    ModelSet models;
    for (auto d : kScoredDimensions)
      models.emplace(d, read_model(run.input_from(detail::model_dir(l, d) + "/scoring.caamodel").string()));
    auto features = detail::load_feature_set(run, cfg.path("corpus_features", l));
    auto idx = features.index();
    for (const auto& e : entries) {
      const auto* a = e.article(l);
      if (!a) continue;
      auto pronoun = infer_pronoun(*a, cfg.detection.pronouns);
      auto slots = select_sentences(*a, pronoun, cfg.detection);
      auto s = score_entity(e.person_id, *a, slots, models, idx);
      if (s.empty()) unscored.row({e.person_id, l.code(), std::string(to_string(pronoun))});
      for (const auto& x : s)
        scores.row({x.person_id, std::string(to_string(e.group)), l.code(), std::string(to_string(x.dimension)),
                    detail::num(x.mean), detail::num(x.n_verbs)});
    }
  }
  run.write("scores/entity_scores.csv", scores.str());
  run.write("scores/unscored.csv", unscored.str());
  run.finish();
}

inline void run_report(const PipelineConfig& cfg) {
  StageRun run(cfg, "report");
  run.require("score");
  run.require("match");
  auto scores = detail::load_scores(run);
  if (scores.scores.empty())
    throw MissingStageError("score", "no scored entities: stage 'score' produced an empty table");
  auto pairs = detail::load_pairs(run);
  auto entries = detail::load_kept(run);
  std::map<std::string, const BiographyEntry*> treatment;
  for (const auto& e : entries)
    if (e.group == Group::Treatment) treatment.emplace(e.person_id, &e);
  auto out = subgroup_report(pairs, treatment, scores, cfg.languages, cfg.facets, cfg.min_verbs);

  detail::CsvText diff(run.hash(), {"facet", "value", "language", "dimension", "n_pairs", "total_verbs", "mean_diff",
                                    "ci_low", "ci_high", "t", "p", "zero_variance"});
  for (const auto& r : out.reports)
    diff.row({r.facet, r.value, r.language.code(), std::string(to_string(r.dimension)), detail::num(r.n_pairs),
              detail::num(r.total_verbs), detail::num(r.mean_diff), detail::num(r.ci_low), detail::num(r.ci_high),
              detail::num(r.t), detail::num(r.p), detail::flag(r.zero_variance)});
  run.write("reports/diff.csv", diff.str());
  detail::CsvText refused(run.hash(), {"facet", "value", "language", "dimension", "n_pairs", "total_verbs", "reason"});
  for (const auto& r : out.refused)
    refused.row({r.facet, r.value, r.language.code(), std::string(to_string(r.dimension)), detail::num(r.n_pairs),
                 detail::num(r.total_verbs), r.reason});
  run.write("reports/refused.csv", refused.str());
  run.finish();
}

inline void run_rank_imbalance(const PipelineConfig& cfg, std::optional<std::size_t> k = std::nullopt) {
  StageRun run(cfg, "rank-imbalance");
  run.require("score");
  run.require("build-corpus");
  auto scores = detail::load_scores(run);
  if (scores.scores.empty())
    throw MissingStageError("score", "no scored entities: stage 'score' produced an empty table");
  auto entries = detail::load_kept(run);
  std::map<std::string, const BiographyEntry*> people;
  for (const auto& e : entries) people.emplace(e.person_id, &e);
  const std::size_t limit = k.value_or(cfg.imbalance_k);

  detail::CsvText csv(run.hash(), {"language_a", "language_b", "dimension", "rank", "person_id", "score_a", "score_b",
                                   "diff", "title_a", "url_a", "title_b", "url_b"});
  nlohmann::ordered_json lists = nlohmann::ordered_json::array();
  for (const auto& [a, b] : cfg.imbalance_pairs)
    for (auto d : kScoredDimensions) {
      auto r = rank_imbalance(scores, people, a, b, d, limit);
      for (std::size_t i = 0; i < r.entries.size(); ++i) {
        const auto& e = r.entries[i];
        csv.row({a.code(), b.code(), std::string(to_string(d)), std::to_string(i + 1), e.person_id, detail::num(e.score_a),
                 detail::num(e.score_b), detail::num(e.diff), e.title_a, e.url_a, e.title_b, e.url_b});
      }
      lists.push_back({{"language_a", a.code()},
                       {"language_b", b.code()},
                       {"dimension", to_string(d)},
                       {"requested", limit},
                       {"listed", r.entries.size()},
                       {"truncated_request", r.truncated_request}});
    }
  run.write("reports/imbalance.csv", csv.str());
  run.write_json("reports/imbalance.json", {{"lists", lists}});
  run.finish();
}

inline void run_extract_tuples(const PipelineConfig& cfg) {
  validate_for_stage(cfg, "extract-tuples");
  StageRun run(cfg, "extract-tuples");
  auto cp = cfg.path("corpus");
  run.input(cp);
  auto entries = read_corpus_file(cp.string());
  for (const auto& l : cfg.languages) {
    auto np = cfg.path("person_nouns", l);
    run.input(np);
    auto nouns = read_word_list_file(np.string());
    std::vector<conllu::Sentence> sentences;
    for (const auto& e : entries)
      if (const auto* a = e.article(l)) sentences.insert(sentences.end(), a->sentences.begin(), a->sentences.end());
    detail::CsvText csv(run.hash(), {"subject", "verb", "object", "frequency", "samples"});
    for (const auto& t : extract_candidate_tuples(sentences, nouns, cfg.tuples))
      csv.row({t.subject, t.verb, t.object, detail::num(t.frequency), text::join(t.samples, " | ")});
    run.write("tuples/" + l.code() + ".csv", csv.str());
  }
  run.finish();
}

struct StageOptions {
  EvalFilter eval;
  std::optional<std::size_t> imbalance_k;
};

inline void run_stage(const std::string& stage, const PipelineConfig& cfg, const StageOptions& opt = {}) {
  if (stage == "ingest") run_ingest(cfg);
  else if (stage == "aggregate") run_aggregate(cfg);
  else if (stage == "agreement") run_agreement(cfg);
  else if (stage == "context-loss") run_context_loss(cfg);
  else if (stage == "translation-loss") run_translation_loss(cfg);
  else if (stage == "train") run_train(cfg);
  else if (stage == "eval") run_eval(cfg, opt.eval);
  else if (stage == "mt-eval") run_mt_eval(cfg);
  else if (stage == "augment-eval") run_augment_eval(cfg);
  else if (stage == "build-corpus") run_build_corpus(cfg);
  else if (stage == "match") run_match(cfg);
  else if (stage == "score") run_score(cfg);
  else if (stage == "report") run_report(cfg);
  else if (stage == "rank-imbalance") run_rank_imbalance(cfg, opt.imbalance_k);
  else if (stage == "extract-tuples") run_extract_tuples(cfg);
  else throw Error("unknown stage '" + stage + "'");
}

}  // namespace caa
