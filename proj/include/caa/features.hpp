#pragma once

// Contextual-embedding feature files.
//
// Layout: a short ASCII header, one `key=value` per line, then binary rows.
//
//   CAAFEAT 1
//   dim=<D>
//   count=<N>
//   language=<iso-639-1>
//   encoder=<encoder id>
//   layer=<layer id>
//   [any further key=value metadata lines]
//   end
//
// followed by N records, each a little-endian uint32 key length, the UTF-8
// key bytes, and D little-endian IEEE-754 float32 values.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
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

inline constexpr std::string_view kFeatureMagic = "CAAFEAT";
inline constexpr int kFeatureVersion = 1;

struct FeatureRecord {
  std::string key;
  Language language;
  std::vector<float> vector;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

struct FeatureHeader {
  std::size_t dim = 0;
  Language language;
  std::string encoder;
  std::string layer;
  /// Extra header lines in file order (e.g. pooling, created).
  std::vector<std::pair<std::string, std::string>> metadata;

  friend bool operator==(const FeatureHeader&, const FeatureHeader&) = default;
};

struct FeatureFile {
  FeatureHeader header;
  std::vector<FeatureRecord> records;

  friend bool operator==(const FeatureFile&, const FeatureFile&) = default;
};

/// Parameters of a linear classifier over D features: classes * (D + 1).
inline constexpr std::size_t linear_parameter_count(std::size_t dim, std::size_t classes = 3) {
  return classes * (dim + 1);
}

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void check_header_text(std::string_view s, const char* what) {
  if (s.find_first_of("\n\r") != std::string_view::npos)
    throw FormatError(std::string(what) + " must not contain line breaks");
}

}  // namespace detail

/// Checks the invariants shared by reading and writing.
inline void validate(const FeatureFile& file) {
  if (file.header.dim == 0) throw FormatError("feature dimension must be positive");
  std::set<std::string_view> keys;
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    const auto& r = file.records[i];
    if (r.key.empty()) throw FormatError("empty key", i);
    if (!keys.insert(r.key).second) throw FormatError("duplicate key '" + r.key + "'", i);
    if (r.vector.size() != file.header.dim)
      throw FormatError("dimension mismatch: expected " + std::to_string(file.header.dim) +
                            ", found " + std::to_string(r.vector.size()),
                        i);
    for (float v : r.vector)
      if (!std::isfinite(v)) throw FormatError("non-finite value in '" + r.key + "'", i);
  }
}

inline void write_features(const FeatureFile& file, std::ostream& out) {
  validate(file);
  const auto& h = file.header;
  detail::check_header_text(h.encoder, "encoder id");
  detail::check_header_text(h.layer, "layer id");
  out << kFeatureMagic << ' ' << kFeatureVersion << '\n'
      << "dim=" << h.dim << '\n'
      << "count=" << file.records.size() << '\n'
      << "language=" << h.language.code() << '\n'
      << "encoder=" << h.encoder << '\n'
      << "layer=" << h.layer << '\n';
  for (const auto& [k, v] : h.metadata) {
    detail::check_header_text(k, "metadata key");
    detail::check_header_text(v, "metadata value");
    if (k.empty() || k.find('=') != std::string::npos || k == "end")
      throw FormatError("invalid metadata key '" + k + "'");
    out << k << '=' << v << '\n';
  }
  out << "end\n";
  for (const auto& r : file.records) {
    detail::put_u32(out, static_cast<std::uint32_t>(r.key.size()));
    out.write(r.key.data(), static_cast<std::streamsize>(r.key.size()));
    for (float v : r.vector) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw FormatError("write failed");
}

inline void write_features(const FeatureFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_features(file, out);
}

inline FeatureFile read_features(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != std::string(kFeatureMagic) + " " + std::to_string(kFeatureVersion))
    throw FormatError("not a feature file (bad magic or unsupported version)");

  FeatureFile file;
  auto& h = file.header;
  std::map<std::string, std::string> required;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw FormatError("malformed header line '" + line + "'");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "dim" || key == "count" || key == "language" || key == "encoder" || key == "layer") {
      if (!required.emplace(key, val).second) throw FormatError("repeated header key '" + key + "'");
    } else {
      h.metadata.emplace_back(std::move(key), std::move(val));
    }
  }
  if (!ended) throw FormatError("header is not terminated by 'end'");
  for (const char* k : {"dim", "count", "language", "encoder", "layer"})
    if (!required.contains(k)) throw FormatError(std::string("header lacks '") + k + "'");

  std::size_t count = 0;
  try {
    auto dim = text::parse_int(required["dim"]);
    auto n = text::parse_int(required["count"]);
    if (dim <= 0 || n < 0) throw Error("dim must be positive and count non-negative");
    h.dim = static_cast<std::size_t>(dim);
    count = static_cast<std::size_t>(n);
    h.language = Language(required["language"]);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("bad header: ") + e.what());
  }
  h.encoder = required["encoder"];
  h.layer = required["layer"];

  std::vector<unsigned char> buf(h.dim * 4);
  std::set<std::string> keys;
  file.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char lenb[4];
    if (!in.read(reinterpret_cast<char*>(lenb), 4))
      throw FormatError("file declares " + std::to_string(count) + " records but ends after " +
                            std::to_string(i),
                        i);
    auto len = detail::get_u32(lenb);
    if (len == 0 || len > (1u << 20)) throw FormatError("implausible key length", i);
    FeatureRecord rec;
    rec.key.resize(len);
    rec.language = h.language;
    if (!in.read(rec.key.data(), len) ||
        !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError("truncated record", i);
    rec.vector.resize(h.dim);
    for (std::size_t d = 0; d < h.dim; ++d) {
      rec.vector[d] = std::bit_cast<float>(detail::get_u32(&buf[4 * d]));
      if (!std::isfinite(rec.vector[d])) throw FormatError("non-finite value in '" + rec.key + "'", i);
    }
    if (!keys.insert(rec.key).second) throw FormatError("duplicate key '" + rec.key + "'", i);
    file.records.push_back(std::move(rec));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after " + std::to_string(count) + " records");
  return file;
}

inline FeatureFile read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file '" + path + "'");
  try {
    return read_features(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.record());
  }
}

/// Audit sidecar: key -> (sentence text, token index).
struct ManifestEntry {
  std::string key;
  std::string sentence;
  std::size_t token_index = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline nlohmann::ordered_json manifest_to_json(const std::vector<ManifestEntry>& entries) {
  nlohmann::ordered_json j;
  j["format"] = "caa-feature-manifest/1";
  auto& arr = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries)
    arr.push_back({{"key", e.key}, {"sentence", e.sentence}, {"token_index", e.token_index}});
  return j;
}

inline std::vector<ManifestEntry> manifest_from_json(const nlohmann::json& j) {
  std::vector<ManifestEntry> out;
  try {
    for (const auto& e : j.at("entries"))
      out.push_back({e.at("key").get<std::string>(), e.at("sentence").get<std::string>(),
                     e.at("token_index").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed feature manifest: ") + e.what());
  }
  return out;
}

/// Records pooled from several files that share D and encoder.
struct FeatureSet {
  std::size_t dim = 0;
  std::string encoder;
  std::vector<FeatureRecord> records;

  std::unordered_map<std::string, const FeatureRecord*> index() const {
    std::unordered_map<std::string, const FeatureRecord*> idx;
    for (const auto& r : records) idx.emplace(r.key, &r);
    return idx;
  }
};

/// Concatenates feature files (possibly of different languages). Refuses
/// files whose D or encoder id differ, and keys that collide.
inline FeatureSet concatenate(const std::vector<FeatureFile>& files) {
  FeatureSet set;
  std::set<std::string> keys;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& h = files[f].header;
    if (f == 0) {
      set.dim = h.dim;
      set.encoder = h.encoder;
    } else if (h.dim != set.dim) {
      throw FormatError("cannot concatenate feature files with D=" + std::to_string(set.dim) +
                        " and D=" + std::to_string(h.dim));
    } else if (h.encoder != set.encoder) {
      throw FormatError("cannot mix encoder ids '" + set.encoder + "' and '" + h.encoder + "'");
    }
    for (const auto& r : files[f].records) {
      if (!keys.insert(r.key).second) throw FormatError("key '" + r.key + "' appears in two files");
      set.records.push_back(r);
    }
  }
  return set;
}

struct DecontextualizedEmbeddings {
  std::vector<FeatureRecord> records;  // keyed by lemma, sorted
  std::vector<std::string> warnings;
};

/// Averages context vectors per verb lemma. Every record key must appear in
/// `verb_of`; lemmas of `verb_of` without any record are skipped with a
/// warning.
inline DecontextualizedEmbeddings decontextualize_embeddings(
    const std::vector<FeatureRecord>& records, const std::map<std::string, std::string>& verb_of) {
  struct Acc {
    std::vector<double> sum;
    std::size_t n = 0;
    Language language;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : records) {
    auto it = verb_of.find(r.key);
    if (it == verb_of.end()) throw DataError("record '" + r.key + "' has no verb lemma");
    auto& a = acc[it->second];
    if (a.n == 0) {
      a.sum.assign(r.vector.size(), 0.0);
      a.language = r.language;
    } else if (a.sum.size() != r.vector.size()) {
      throw DataError("records of lemma '" + it->second + "' differ in dimension");
    }
    for (std::size_t d = 0; d < r.vector.size(); ++d) a.sum[d] += r.vector[d];
    ++a.n;
  }

  DecontextualizedEmbeddings out;
  std::set<std::string> wanted;
  for (const auto& [key, lemma] : verb_of) wanted.insert(lemma);
  for (const auto& lemma : wanted) {
    auto it = acc.find(lemma);
    if (it == acc.end()) {
      out.warnings.push_back("lemma '" + lemma + "' has no feature records; skipped");
      continue;
    }
    FeatureRecord rec{lemma, it->second.language, {}};
    rec.vector.reserve(it->second.sum.size());
    for (double s : it->second.sum)
      rec.vector.push_back(static_cast<float>(s / static_cast<double>(it->second.n)));
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace caa
