#pragma once

// Minimal CoNLL-U reader. Multiword ranges (1-2) and empty nodes (1.1) are
// skipped; token positions are 0-based indexes into Sentence::tokens.

#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "caa/error.hpp"
#include "caa/text.hpp"

namespace caa::conllu {

struct Token {
  int id = 0;  // 1-based as in the file
  std::string form;
  std::string lemma;
  std::string upos;
  std::string xpos;
  std::string feats;
  int head = 0;  // 0 = root
  std::string deprel;

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::string id;
  std::string text;
  std::vector<Token> tokens;

  /// 0-based index of token i's head, or -1 for the root.
  int head_index(std::size_t i) const { return tokens.at(i).head - 1; }

  /// Base relation without a subtype ("nsubj:pass" -> "nsubj").
  static std::string_view base_relation(std::string_view deprel) {
    return deprel.substr(0, deprel.find(':'));
  }

  bool operator==(const Sentence&) const = default;
};

/// Parses every sentence in `in`. Sentences without a sent_id comment are
/// numbered from 1 in order.
inline std::vector<Sentence> read(std::istream& in, const std::string& source = "<conllu>") {
  std::vector<Sentence> out;
  Sentence cur;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (cur.tokens.empty()) {
      cur = {};
      return;
    }
    if (cur.id.empty()) cur.id = std::to_string(out.size() + 1);
    for (std::size_t i = 0; i < cur.tokens.size(); ++i) {
      if (cur.tokens[i].id != static_cast<int>(i + 1))
        throw ParseError(source, line_no, "token ids of sentence '" + cur.id + "' are not consecutive");
      if (cur.tokens[i].head < 0 || cur.tokens[i].head > static_cast<int>(cur.tokens.size()))
        throw ParseError(source, line_no, "head out of range in sentence '" + cur.id + "'");
    }
    out.push_back(std::move(cur));
    cur = {};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = text::trim(std::string_view(line).substr(1, eq - 1));
      auto val = std::string(text::trim(std::string_view(line).substr(eq + 1)));
      if (key == "sent_id") cur.id = val;
      else if (key == "text") cur.text = val;
      continue;
    }
    auto cols = text::split(line, '\t');
    if (cols.size() != 10)
      throw ParseError(source, line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    Token t;
    try {
      t.id = static_cast<int>(text::parse_int(cols[0]));
      t.head = cols[6] == "_" ? -1 : static_cast<int>(text::parse_int(cols[6]));
    } catch (const Error&) {
      throw ParseError(source, line_no, "bad token id or head");
    }
    if (t.head < 0) throw ParseError(source, line_no, "token without a head; the corpus is not parsed");
    t.form = cols[1];
    t.lemma = cols[2];
    t.upos = cols[3];
    t.xpos = cols[4];
    t.feats = cols[5];
    t.deprel = cols[7];
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return out;
}

inline std::vector<Sentence> read_string(const std::string& s, const std::string& source = "<conllu>") {
  std::istringstream in(s);
  return read(in, source);
}

}  // namespace caa::conllu
