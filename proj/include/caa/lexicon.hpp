#pragma once

// Turning raw crowd judgements into aggregated, ternarized lexicons.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caa/error.hpp"
#include "caa/text.hpp"
#include "caa/types.hpp"

namespace caa {

/// Maps a categorical judgement string onto {-1, 0, +1} for a dimension.
/// Matching ignores case and repeated whitespace. Bare numeric values
/// ("-1", "0", "1", "+1") are accepted for every dimension.
inline std::optional<int> map_judgement(Dimension dim, std::string_view raw) {
  std::string key;
  for (auto& word : text::split(text::fold_case(text::trim(raw)), ' ')) {
    if (word.empty()) continue;
    if (!key.empty()) key += ' ';
    key += word;
  }
  if (key == "-1") return -1;
  if (key == "0") return 0;
  if (key == "1" || key == "+1") return 1;

  static const std::map<std::string, int> power = {
      {"more", 1}, {"more power", 1}, {"subject has more power", 1},
      {"equal", 0}, {"equal power", 0}, {"subject has equal power", 0},
      {"subject and object have equal power", 0},
      {"less", -1}, {"less power", -1}, {"subject has less power", -1}};
  static const std::map<std::string, int> agency = {
      {"high", 1}, {"high agency", 1}, {"subject has high agency", 1},
      {"moderate", 0}, {"moderate agency", 0}, {"subject has moderate agency", 0},
      {"low", -1}, {"low agency", -1}, {"subject has low agency", -1}};
  static const std::map<std::string, int> sentiment = {
      {"positive", 1}, {"neutral", 0}, {"negative", -1}};

  const auto& table = dim == Dimension::Power    ? power
                      : dim == Dimension::Agency ? agency
                                                 : sentiment;
  if (auto it = table.find(key); it != table.end()) return it->second;
  return std::nullopt;
}

/// Groups one-judgement-per-row annotation records into one Lexicon per
/// (language, dimension), ordered by language then dimension. Instances keep
/// the order in which they first appear. No aggregation happens here.
///
/// Required columns: instance_id, language, dimension, verb_lemma, sentence,
/// verb_token_index, annotator_id, judgement.
inline std::vector<Lexicon> ingest_judgements(const text::Table& table,
                                              const std::string& source = "<annotations>") {
  if (table.header.empty()) return {};
  const auto c_id = table.column("instance_id", source);
  const auto c_lang = table.column("language", source);
  const auto c_dim = table.column("dimension", source);
  const auto c_verb = table.column("verb_lemma", source);
  const auto c_sent = table.column("sentence", source);
  const auto c_tok = table.column("verb_token_index", source);
  const auto c_ann = table.column("annotator_id", source);
  const auto c_judg = table.column("judgement", source);

  using LexKey = std::pair<Language, Dimension>;
  std::map<LexKey, Lexicon> lexicons;
  std::map<LexKey, std::unordered_map<std::string, std::size_t>> positions;

  for (const auto& row : table.rows) {
    const auto& cells = row.cells;
    auto fail = [&](const std::string& what) { throw ParseError(source, row.line, what); };

    Language lang;
    Dimension dim{};
    long long token = 0;
    try {
      lang = Language(cells[c_lang]);
      dim = parse_dimension(cells[c_dim]);
      token = text::parse_int(cells[c_tok]);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
    if (token < 0) fail("negative verb_token_index");
    std::string id(text::trim(cells[c_id]));
    std::string annotator(text::trim(cells[c_ann]));
    if (id.empty()) fail("empty instance_id");
    if (annotator.empty()) fail("empty annotator_id");
    auto value = map_judgement(dim, cells[c_judg]);
    if (!value)
      fail("unknown " + std::string(to_string(dim)) + " judgement '" + cells[c_judg] + "'");

    LexKey key{lang, dim};
    auto& lex = lexicons[key];
    lex.language = lang;
    lex.dimension = dim;
    auto& pos = positions[key];
    auto [it, inserted] = pos.try_emplace(id, lex.instances.size());
    if (inserted) {
      ConnotationInstance inst;
      inst.instance_id = id;
      inst.verb_lemma = std::string(text::trim(cells[c_verb]));
      inst.context_sentence = cells[c_sent];
      inst.verb_token_index = static_cast<std::size_t>(token);
      inst.language = lang;
      inst.dimension = dim;
      lex.instances.push_back(std::move(inst));
    }
    auto& inst = lex.instances[it->second];
    if (!inserted) {
      if (inst.verb_lemma != text::trim(cells[c_verb]) || inst.context_sentence != cells[c_sent] ||
          inst.verb_token_index != static_cast<std::size_t>(token))
        fail("instance '" + id + "' has inconsistent verb/sentence/token across rows");
      for (const auto& j : inst.judgements)
        if (j.annotator_id == annotator)
          fail("duplicate judgement by annotator '" + annotator + "' on instance '" + id + "'");
    }
    inst.judgements.push_back({annotator, *value});
  }

  std::vector<Lexicon> out;
  for (auto& [key, lex] : lexicons) {
    lex.provenance = "ingested from " + source;
    out.push_back(std::move(lex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotator filtering

struct AnnotatorStats {
  std::string annotator_id;
  std::size_t judged = 0;         // judgements on instances with >= 2 judgements
  std::size_t disagreements = 0;  // instances counted against the annotator
  double rate = 0.0;
  bool removed = false;
};

struct AnnotatorReport {
  double mean_rate = 0.0;
  double sd_rate = 0.0;  // population SD over annotators
  double threshold = 0.0;
  std::vector<AnnotatorStats> annotators;  // sorted by annotator_id
  std::vector<std::string> removed;
  /// (lexicon name, instance_id) of instances left with < 2 judgements.
  std::vector<std::pair<std::string, std::string>> dropped_instances;

  double removed_fraction() const {
    return annotators.empty() ? 0.0
                              : static_cast<double>(removed.size()) / annotators.size();
  }
};

struct FilterResult {
  std::vector<Lexicon> lexicons;
  AnnotatorReport report;
};

/// Whether `idx` is counted as disagreeing on this instance: every other
/// judgement agrees with every other and `idx` differs from them. With two
/// judgements any mismatch counts against both annotators.
inline bool disagrees_with_peers(const std::vector<Judgement>& js, std::size_t idx) {
  std::optional<int> peer;
  for (std::size_t k = 0; k < js.size(); ++k) {
    if (k == idx) continue;
    if (!peer) peer = js[k].value;
    else if (*peer != js[k].value) return false;
  }
  return peer && *peer != js[idx].value;
}

/// Computes per-annotator disagreement rates over all given lexicons and
/// removes judgements of annotators whose rate exceeds mean + 1 SD. Instances
/// left with fewer than two judgements are dropped.
inline FilterResult filter_annotators(std::vector<Lexicon> lexicons) {
  std::map<std::string, AnnotatorStats> stats;
  for (const auto& lex : lexicons)
    for (const auto& inst : lex.instances) {
      if (inst.judgements.size() < 2) continue;
      for (std::size_t k = 0; k < inst.judgements.size(); ++k) {
        auto& s = stats[inst.judgements[k].annotator_id];
        s.annotator_id = inst.judgements[k].annotator_id;
        ++s.judged;
        if (disagrees_with_peers(inst.judgements, k)) ++s.disagreements;
      }
    }

  FilterResult result;
  auto& report = result.report;
  if (stats.empty()) {
    result.lexicons = std::move(lexicons);
    return result;
  }

  double sum = 0;
  for (auto& [id, s] : stats) {
    s.rate = static_cast<double>(s.disagreements) / static_cast<double>(s.judged);
    sum += s.rate;
  }
  const double n = static_cast<double>(stats.size());
  report.mean_rate = sum / n;
  double ss = 0;
  for (const auto& [id, s] : stats) ss += (s.rate - report.mean_rate) * (s.rate - report.mean_rate);
  report.sd_rate = std::sqrt(ss / n);
  report.threshold = report.mean_rate + report.sd_rate;

  std::set<std::string> removed;
  for (auto& [id, s] : stats) {
    s.removed = s.rate > report.threshold;
    if (s.removed) {
      removed.insert(id);
      report.removed.push_back(id);
    }
    report.annotators.push_back(s);
  }

  for (auto& lex : lexicons) {
    std::vector<ConnotationInstance> kept;
    kept.reserve(lex.instances.size());
    for (auto& inst : lex.instances) {
      std::erase_if(inst.judgements,
                    [&](const Judgement& j) { return removed.contains(j.annotator_id); });
      if (inst.judgements.size() < 2) {
        report.dropped_instances.emplace_back(lexicon_name(lex.language, lex.dimension),
                                              inst.instance_id);
        continue;
      }
      kept.push_back(std::move(inst));
    }
    lex.instances = std::move(kept);
  }
  result.lexicons = std::move(lexicons);
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Sets every instance's aggregate score to the mean judgement value and its
/// label to the ternarized score.
inline Lexicon aggregate_and_ternarize(Lexicon lexicon) {
  for (auto& inst : lexicon.instances) {
    if (inst.judgements.size() < 2)
      throw DataError("instance '" + inst.instance_id + "' has " +
                      std::to_string(inst.judgements.size()) + " judgement(s); need at least 2");
    long long total = 0;
    for (const auto& j : inst.judgements) total += j.value;
    double score = static_cast<double>(total) / static_cast<double>(inst.judgements.size());
    inst.aggregate_score = score;
    inst.label = ternarize(score);
  }
  return lexicon;
}

/// Mean over instances of the fraction of agreeing annotator pairs. With
/// `ignore_neutral_conflicts`, only (+1, -1) pairs count as disagreement.
inline double pairwise_agreement(const Lexicon& lexicon, bool ignore_neutral_conflicts) {
  double total = 0;
  std::size_t counted = 0;
  for (const auto& inst : lexicon.instances) {
    const auto& js = inst.judgements;
    if (js.size() < 2) continue;
    std::size_t pairs = 0, agree = 0;
    for (std::size_t a = 0; a < js.size(); ++a)
      for (std::size_t b = a + 1; b < js.size(); ++b) {
        ++pairs;
        bool same = js[a].value == js[b].value;
        if (ignore_neutral_conflicts) same = js[a].value * js[b].value != -1;
        if (same) ++agree;
      }
    total += static_cast<double>(agree) / static_cast<double>(pairs);
    ++counted;
  }
  if (counted == 0) throw DataError("pairwise agreement needs an instance with >= 2 judgements");
  return total / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const Lexicon& lex) {
  nlohmann::ordered_json j;
  j["format"] = "caa-lexicon/1";
  j["language"] = lex.language.code();
  j["dimension"] = to_string(lex.dimension);
  j["provenance"] = lex.provenance;
  auto& arr = j["instances"] = nlohmann::ordered_json::array();
  for (const auto& inst : lex.instances) {
    nlohmann::ordered_json ij;
    ij["instance_id"] = inst.instance_id;
    ij["verb_lemma"] = inst.verb_lemma;
    ij["sentence"] = inst.context_sentence;
    ij["verb_token_index"] = inst.verb_token_index;
    auto& js = ij["judgements"] = nlohmann::ordered_json::array();
    for (const auto& jd : inst.judgements)
      js.push_back({{"annotator_id", jd.annotator_id}, {"value", jd.value}});
    ij["aggregate_score"] = inst.aggregate_score ? nlohmann::ordered_json(*inst.aggregate_score)
                                                 : nlohmann::ordered_json(nullptr);
    ij["label"] = inst.label ? nlohmann::ordered_json(to_string(*inst.label))
                             : nlohmann::ordered_json(nullptr);
    arr.push_back(std::move(ij));
  }
  return j;
}

inline TernaryLabel parse_label(std::string_view s) {
  auto v = text::fold_case(text::trim(s));
  if (v == "positive" || v == "1" || v == "+1") return TernaryLabel::Positive;
  if (v == "neutral" || v == "0") return TernaryLabel::Neutral;
  if (v == "negative" || v == "-1") return TernaryLabel::Negative;
  throw Error("unknown label '" + std::string(s) + "'");
}

/// Parses and validates a lexicon document.
inline Lexicon lexicon_from_json(const nlohmann::json& j) {
  Lexicon lex;
  try {
    lex.language = Language(j.at("language").get<std::string>());
    lex.dimension = parse_dimension(j.at("dimension").get<std::string>());
    lex.provenance = j.value("provenance", "");
    std::set<std::string> ids;
    for (const auto& ij : j.at("instances")) {
      ConnotationInstance inst;
      inst.instance_id = ij.at("instance_id").get<std::string>();
      inst.verb_lemma = ij.at("verb_lemma").get<std::string>();
      inst.context_sentence = ij.at("sentence").get<std::string>();
      inst.verb_token_index = ij.at("verb_token_index").get<std::size_t>();
      inst.language = lex.language;
      inst.dimension = lex.dimension;
      if (!ids.insert(inst.instance_id).second)
        throw DataError("duplicate instance_id '" + inst.instance_id + "'");
      std::set<std::string> annotators;
      for (const auto& jd : ij.at("judgements")) {
        Judgement jg{jd.at("annotator_id").get<std::string>(), jd.at("value").get<int>()};
        if (jg.value < -1 || jg.value > 1 || jg.annotator_id.empty())
          throw DataError("invalid judgement on '" + inst.instance_id + "'");
        if (!annotators.insert(jg.annotator_id).second)
          throw DataError("duplicate annotator on '" + inst.instance_id + "'");
        inst.judgements.push_back(std::move(jg));
      }
      if (ij.contains("aggregate_score") && !ij["aggregate_score"].is_null())
        inst.aggregate_score = ij["aggregate_score"].get<double>();
      if (ij.contains("label") && !ij["label"].is_null())
        inst.label = parse_label(ij["label"].get<std::string>());
      if (inst.label && inst.aggregate_score && *inst.label != ternarize(*inst.aggregate_score))
        throw DataError("label of '" + inst.instance_id + "' disagrees with its score");
      lex.instances.push_back(std::move(inst));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed lexicon document: ") + e.what());
  }
  return lex;
}

}  // namespace caa
