#pragma once

// Pipeline configuration: an INI file with sections, overridable from the
// command line. Every key has a default; the effective key/value map is
// hashed to tag outputs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "caa/affect.hpp"
#include "caa/classifier.hpp"
#include "caa/corpus.hpp"
#include "caa/error.hpp"
#include "caa/matching.hpp"
#include "caa/text.hpp"
#include "caa/types.hpp"

namespace caa {

/// Every problem found while reading or validating a configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(summarize(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string summarize(const std::vector<std::string>& p) {
    std::string s = std::to_string(p.size()) + " configuration problem(s)";
    for (const auto& x : p) s += "\n  - " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

/// Hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

inline std::string sha256_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

/// Keys with their defaults. `{lang}` in a path is replaced per language.
inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"paths.output_dir", "out"},
      {"paths.annotations", "annotations.tsv"},
      {"paths.features", "features/{lang}.caafeat"},
      {"paths.translated_features", "features/{lang}.mt-en.caafeat"},
      {"paths.translation_table", "translations.tsv"},
      {"paths.corpus", "corpus.jsonl"},
      {"paths.corpus_features", "corpus_features/{lang}.caafeat"},
      {"paths.exclusion_list", "excluded_categories.txt"},
      {"paths.person_nouns", "person_nouns/{lang}.txt"},
      {"run.languages", "en,es,ru"},
      {"run.seed", "13"},
      {"classifier.l2", "0.0001"},
      {"classifier.grad_tol", "0.000001"},
      {"classifier.max_iter", "10000"},
      {"classifier.weight_values", "0.5,1,2,4"},
      {"classifier.folds", "5"},
      {"matching.pivot", "auto"},
      {"matching.slope", "auto"},
      {"matching.slope_grid", "0,0.1,0.2,0.3,0.4,0.5"},
      {"matching.similarity", "pivoted-dot"},
      {"matching.floor", "1e-9"},
      {"corpus.subject_relations", "nsubj"},
      {"corpus.object_relations", "obj,dobj"},
      {"corpus.match_surname", "true"},
      {"corpus.min_sentences", "3"},
      {"corpus.pronouns.en", "he|she"},
      {"corpus.pronouns.es", "él|ella"},
      {"corpus.pronouns.ru", "он|она"},
      {"corpus.tuple_verbs", "300"},
      {"corpus.tuple_contexts", "3"},
      {"corpus.tuple_samples", "3"},
      {"report.min_verbs", "280"},
      {"report.home_nationality", "American"},
      {"report.year_edges", "1900,1960"},
      {"report.occupation_priority", "Entertainer,Artist"},
      {"report.occupation_other", "Other"},
      {"report.imbalance_k", "10"},
      {"report.imbalance_pairs", "en:es,en:ru,es:ru"},
      {"scoring.augment_languages", "all"},
  };
  return d;
}

struct PipelineConfig {
  std::filesystem::path config_dir;
  std::map<std::string, std::string> values;  // effective, defaults filled in

  std::filesystem::path output_dir;
  std::vector<Language> languages;
  std::uint64_t seed = 0;

  TrainOptions train;
  std::vector<ClassWeights> weight_grid;
  std::size_t folds = 5;

  std::optional<double> pivot;
  std::optional<double> slope;
  std::vector<double> slope_grid;
  MatchOptions match;

  DetectionOptions detection;
  TupleOptions tuples;

  std::size_t min_verbs = kDefaultMinVerbs;
  FacetOptions facets;
  std::size_t imbalance_k = 10;
  std::vector<std::pair<Language, Language>> imbalance_pairs;

  std::vector<Language> augment_languages;

  /// A configured path, resolved against the config directory.
  std::filesystem::path path(const std::string& key, const Language* lang = nullptr) const {
    std::string raw = values.at("paths." + key);
    if (lang) {
      for (auto pos = raw.find("{lang}"); pos != std::string::npos; pos = raw.find("{lang}"))
        raw.replace(pos, 6, lang->code());
    }
    std::filesystem::path p(raw);
    return p.is_absolute() ? p : config_dir / p;
  }
  std::filesystem::path path(const std::string& key, const Language& lang) const { return path(key, &lang); }

  /// key=value lines, sorted; the output directory is left out so the same
  /// experiment written to two places hashes the same.
  std::string canonical_text() const {
    std::string s;
    for (const auto& [k, v] : values)
      if (k != "paths.output_dir") s += k + "=" + v + "\n";
    return s;
  }

  std::string hash() const { return sha256_hex(canonical_text()); }
};

namespace detail {

inline std::vector<std::string> list_items(const std::string& v, char sep = ',') {
  std::vector<std::string> out;
  for (auto& part : text::split(v, sep)) {
    auto t = text::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline std::string normalize_value(std::string v) {
  auto t = text::trim(v);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return std::string(t);
}

}  // namespace detail

/// `section.key=value` command-line overrides, applied after the file.
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

inline ConfigOverrides parse_overrides(const std::vector<std::string>& items) {
  ConfigOverrides out;
  std::vector<std::string> problems;
  for (const auto& it : items) {
    auto eq = it.find('=');
    if (eq == std::string::npos || eq == 0) {
      problems.push_back("override '" + it + "' is not of the form section.key=value");
      continue;
    }
    out.emplace_back(std::string(text::trim(it.substr(0, eq))), detail::normalize_value(it.substr(eq + 1)));
  }
  if (!problems.empty()) throw ConfigError(problems);
  return out;
}

/// Reads the INI text, applies overrides and parses every key. All
/// problems are collected and raised together.
inline PipelineConfig parse_config(std::istream& in, const std::filesystem::path& config_dir,
                                   const ConfigOverrides& overrides = {}, const std::string& source = "<config>") {
  std::vector<std::string> problems;
  PipelineConfig cfg;
  cfg.config_dir = config_dir;
  cfg.values = config_defaults();

  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError({source + ":" + std::to_string(e.line()) + ": " + e.message()});
  }
  auto set = [&](const std::string& key, const std::string& value, const std::string& origin) {
    if (!cfg.values.count(key) && key.rfind("corpus.pronouns.", 0) != 0) {
      problems.push_back(origin + ": unknown key '" + key + "'");
      return;
    }
    cfg.values[key] = detail::normalize_value(value);
  };
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      problems.push_back(source + ": key '" + section + "' is outside any section");
      continue;
    }
    for (const auto& [key, node] : body) set(section + "." + key, node.get_value<std::string>(), source);
  }
  for (const auto& [k, v] : overrides) set(k, v, "override");

  const auto& v = cfg.values;
  auto number = [&](const std::string& key, double lo, double hi, bool open_lo = false) -> double {
    try {
      double x = text::parse_double(v.at(key));
      if (!std::isfinite(x) || x < lo || x > hi || (open_lo && x == lo)) {
        problems.push_back(key + " = " + v.at(key) + " is outside " + (open_lo ? "(" : "[") +
                           text::format_number(lo) + ", " + text::format_number(hi) + "]");
      }
      return x;
    } catch (const Error&) {
      problems.push_back(key + " = '" + v.at(key) + "' is not a number");
      return lo;
    }
  };
  auto integer = [&](const std::string& key, long long lo) -> long long {
    try {
      auto x = text::parse_int(v.at(key));
      if (x < lo) problems.push_back(key + " = " + v.at(key) + " is below " + std::to_string(lo));
      return std::max(x, lo);
    } catch (const Error&) {
      problems.push_back(key + " = '" + v.at(key) + "' is not an integer");
      return lo;
    }
  };
  auto flag = [&](const std::string& key) -> bool {
    try {
      return text::parse_flag(v.at(key));
    } catch (const Error&) {
      problems.push_back(key + " = '" + v.at(key) + "' is not true/false");
      return false;
    }
  };
  auto language = [&](const std::string& key, const std::string& code) -> std::optional<Language> {
    try {
      return Language(code);
    } catch (const Error&) {
      problems.push_back(key + ": invalid language code '" + code + "'");
      return std::nullopt;
    }
  };
  auto numbers = [&](const std::string& key, double lo, double hi, bool open_lo) {
    std::vector<double> out;
    for (const auto& item : detail::list_items(v.at(key))) {
      try {
        double x = text::parse_double(item);
        if (!std::isfinite(x) || x < lo || x > hi || (open_lo && x == lo))
          problems.push_back(key + ": value " + item + " is out of range");
        out.push_back(x);
      } catch (const Error&) {
        problems.push_back(key + ": '" + item + "' is not a number");
      }
    }
    if (out.empty()) problems.push_back(key + " is empty");
    return out;
  };

  if (v.at("paths.output_dir").empty()) problems.push_back("paths.output_dir is empty");
  {
    std::filesystem::path p(v.at("paths.output_dir"));
    cfg.output_dir = p.is_absolute() ? p : config_dir / p;
  }
  bool languages_valid = true;
  for (const auto& code : detail::list_items(v.at("run.languages")))
    if (auto l = language("run.languages", code); !l) {
      languages_valid = false;
    } else {
      if (std::find(cfg.languages.begin(), cfg.languages.end(), *l) != cfg.languages.end())
        problems.push_back("run.languages lists '" + code + "' twice");
      else
        cfg.languages.push_back(*l);
    }
  if (cfg.languages.empty()) problems.push_back("run.languages is empty");
  cfg.seed = static_cast<std::uint64_t>(integer("run.seed", 0));

  cfg.train.l2 = number("classifier.l2", 0, 1e6);
  cfg.train.grad_tol = number("classifier.grad_tol", 0, 1, true);
  cfg.train.max_iter = static_cast<int>(integer("classifier.max_iter", 1));
  cfg.train.seed = cfg.seed;
  {
    auto w = numbers("classifier.weight_values", 0, 1e6, true);
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end()), w.end());
    for (double a : w)
      for (double b : w)
        for (double c : w) cfg.weight_grid.push_back({a, b, c});
  }
  cfg.folds = static_cast<std::size_t>(integer("classifier.folds", 3));

  if (text::fold_case(v.at("matching.pivot")) != "auto") cfg.pivot = number("matching.pivot", 0, 1e9, true);
  if (text::fold_case(v.at("matching.slope")) != "auto") cfg.slope = number("matching.slope", 0, 1);
  cfg.slope_grid = numbers("matching.slope_grid", 0, 1, false);
  try {
    cfg.match.similarity = parse_similarity(v.at("matching.similarity"));
  } catch (const Error& e) {
    problems.push_back(std::string("matching.similarity: ") + e.what());
  }
  cfg.match.floor = number("matching.floor", 0, 1e9);

  for (auto key : {"corpus.subject_relations", "corpus.object_relations"}) {
    auto items = detail::list_items(v.at(key));
    if (items.empty()) problems.push_back(std::string(key) + " is empty");
    auto& dst = std::string(key) == "corpus.subject_relations" ? cfg.detection.subject_relations
                                                               : cfg.detection.object_relations;
    dst = {items.begin(), items.end()};
  }
  for (const auto& rel : cfg.detection.subject_relations)
    if (cfg.detection.object_relations.count(rel))
      problems.push_back("relation '" + rel + "' is both a subject and an object relation");
  cfg.detection.match_surname = flag("corpus.match_surname");
  cfg.detection.min_sentences = static_cast<std::size_t>(integer("corpus.min_sentences", 0));
  cfg.detection.pronouns.clear();
  for (const auto& [key, value] : v) {
    if (key.rfind("corpus.pronouns.", 0) != 0) continue;
    auto lang = language(key, key.substr(16));
    auto parts = text::split(value, '|');
    if (parts.size() != 2) {
      problems.push_back(key + " must be '<he forms>|<she forms>'");
      continue;
    }
    PronounSet ps;
    for (const auto& f : detail::list_items(parts[0], ' ')) ps.he.insert(text::fold_case(f));
    for (const auto& f : detail::list_items(parts[1], ' ')) ps.she.insert(text::fold_case(f));
    if (lang) cfg.detection.pronouns[*lang] = ps;
  }
  cfg.tuples.k_verbs = static_cast<std::size_t>(integer("corpus.tuple_verbs", 1));
  cfg.tuples.k_contexts = static_cast<std::size_t>(integer("corpus.tuple_contexts", 1));
  cfg.tuples.n_samples = static_cast<std::size_t>(integer("corpus.tuple_samples", 0));
  cfg.tuples.subject_relations = cfg.detection.subject_relations;
  cfg.tuples.object_relations = cfg.detection.object_relations;

  cfg.min_verbs = static_cast<std::size_t>(integer("report.min_verbs", 0));
  cfg.facets.home_nationality = v.at("report.home_nationality");
  cfg.facets.year_edges.clear();
  for (const auto& item : detail::list_items(v.at("report.year_edges"))) {
    try {
      cfg.facets.year_edges.push_back(static_cast<int>(text::parse_int(item)));
    } catch (const Error&) {
      problems.push_back("report.year_edges: '" + item + "' is not a year");
    }
  }
  if (!std::is_sorted(cfg.facets.year_edges.begin(), cfg.facets.year_edges.end()) ||
      std::adjacent_find(cfg.facets.year_edges.begin(), cfg.facets.year_edges.end()) != cfg.facets.year_edges.end())
    problems.push_back("report.year_edges must be strictly increasing");
  cfg.facets.occupation_priority = detail::list_items(v.at("report.occupation_priority"));
  cfg.facets.occupation_other = v.at("report.occupation_other");
  cfg.imbalance_k = static_cast<std::size_t>(integer("report.imbalance_k", 1));
  for (const auto& item : detail::list_items(v.at("report.imbalance_pairs"))) {
    auto parts = text::split(item, ':');
    if (parts.size() != 2) {
      problems.push_back("report.imbalance_pairs: '" + item + "' is not of the form a:b");
      continue;
    }
    auto a = language("report.imbalance_pairs", parts[0]);
    auto b = language("report.imbalance_pairs", parts[1]);
    if (a && b) cfg.imbalance_pairs.emplace_back(*a, *b);
  }

  auto aug = text::fold_case(text::trim(v.at("scoring.augment_languages")));
  if (aug == "all") {
    cfg.augment_languages = cfg.languages;
  } else if (aug != "none") {
    for (const auto& code : detail::list_items(aug))
      if (auto l = language("scoring.augment_languages", code)) cfg.augment_languages.push_back(*l);
  }

  auto known = [&](const Language& l) {
    return std::find(cfg.languages.begin(), cfg.languages.end(), l) != cfg.languages.end();
  };
  // Membership is only meaningful once the language list itself parsed.
  if (languages_valid) {
    for (const auto& [a, b] : cfg.imbalance_pairs)
      if (!known(a) || !known(b) || a == b)
        problems.push_back("report.imbalance_pairs: " + a.code() + ":" + b.code() + " must name two distinct run languages");
    for (const auto& l : cfg.augment_languages)
      if (!known(l)) problems.push_back("scoring.augment_languages: '" + l.code() + "' is not a run language");
  }

  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& file, const ConfigOverrides& overrides = {}) {
  std::ifstream in(file);
  if (!in) throw ConfigError({"cannot open config file '" + file.string() + "'"});
  auto dir = std::filesystem::absolute(file).parent_path();
  return parse_config(in, dir, overrides, file.string());
}

/// Configured input files a stage reads, by key (per language where the
/// path carries `{lang}`).
inline std::vector<std::filesystem::path> stage_inputs(const PipelineConfig& cfg, const std::string& stage) {
  std::vector<std::filesystem::path> out;
  auto per_lang = [&](const std::string& key, bool skip_english = false) {
    for (const auto& l : cfg.languages)
      if (!(skip_english && l.code() == "en")) out.push_back(cfg.path(key, l));
  };
  if (stage == "ingest") out.push_back(cfg.path("annotations"));
  if (stage == "translation-loss") out.push_back(cfg.path("translation_table"));
  if (stage == "train" || stage == "augment-eval") per_lang("features");
  if (stage == "mt-eval") per_lang("translated_features", true);
  if (stage == "build-corpus" || stage == "match" || stage == "score" || stage == "report" ||
      stage == "rank-imbalance" || stage == "extract-tuples")
    out.push_back(cfg.path("corpus"));
  if (stage == "match") out.push_back(cfg.path("exclusion_list"));
  if (stage == "score") per_lang("corpus_features");
  if (stage == "extract-tuples") per_lang("person_nouns");
  return out;
}

/// Raises one ConfigError listing every missing input of `stage`.
inline void validate_for_stage(const PipelineConfig& cfg, const std::string& stage) {
  std::vector<std::string> problems;
  for (const auto& p : stage_inputs(cfg, stage))
    if (!std::filesystem::is_regular_file(p)) problems.push_back("input file '" + p.string() + "' does not exist");
  if (stage == "mt-eval" &&
      std::find(cfg.languages.begin(), cfg.languages.end(), Language("en")) == cfg.languages.end())
    problems.push_back("mt-eval needs 'en' among run.languages");
  if (!problems.empty()) throw ConfigError(problems);
}

}  // namespace caa
