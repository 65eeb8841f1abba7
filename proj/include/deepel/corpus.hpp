// Document collections on disk: JSON-lines and CoNLL-style column text,
// prediction files, frequency tables and bucketed accuracy reports.
#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepel/core.hpp"
#include "deepel/document.hpp"
#include "deepel/local.hpp"

namespace deepel {

enum class Split { kTrain, kValidation, kTest };

inline const char* SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

struct Corpus {
  std::vector<Document> docs;
  Split split = Split::kTest;
};

struct CorpusStats {
  std::size_t docs = 0;
  std::size_t mentions = 0;
  double mentions_per_doc = 0.0;
};

inline CorpusStats Stats(std::span<const Document> docs) {
  CorpusStats s;
  s.docs = docs.size();
  for (const auto& d : docs) s.mentions += d.mentions.size();
  if (s.docs > 0)
    s.mentions_per_doc = static_cast<double>(s.mentions) / static_cast<double>(s.docs);
  return s;
}

/// Spans must be nonempty, inside the token list, ordered by start and
/// disjoint.
inline void ValidateDocument(const Document& doc) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& m = doc.mentions[i];
    const std::string where = "document '" + doc.id + "' mention " + std::to_string(i);
    if (m.start >= m.end) throw Error(where + ": empty span");
    if (m.end > doc.tokens.size())
      throw Error(where + ": span [" + std::to_string(m.start) + ", " +
                  std::to_string(m.end) + ") past end of " +
                  std::to_string(doc.tokens.size()) + " tokens");
    if (i > 0 && m.start < prev_end)
      throw Error(where + ": overlaps or precedes the previous mention");
    prev_end = m.end;
  }
}

inline void CheckDisjointIds(std::span<const Corpus> corpora) {
  std::map<std::string, Split> seen;
  for (const auto& c : corpora)
    for (const auto& d : c.docs) {
      auto [it, fresh] = seen.emplace(d.id, c.split);
      if (!fresh && it->second != c.split)
        throw Error("document '" + d.id + "' appears in both " +
                    SplitName(it->second) + " and " + SplitName(c.split));
    }
}

// ---------------------------------------------------------------------------
// JSON lines: {"id", "tokens": [...], "mentions": [{"start", "end",
// "surface", "gold", "candidates": [{"entity", "prior", "reason"}]}]}

inline Document ParseDocumentJson(const nlohmann::json& j, EmbeddingStore& store) {
  Document doc;
  doc.id = j.at("id").get<std::string>();
  doc.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (j.contains("mentions")) {
    for (const auto& jm : j.at("mentions")) {
      Mention m;
      m.start = jm.at("start").get<std::size_t>();
      m.end = jm.at("end").get<std::size_t>();
      if (jm.contains("surface")) {
        m.surface = jm.at("surface").get<std::string>();
      } else if (m.start < m.end && m.end <= doc.tokens.size()) {
        for (std::size_t k = m.start; k < m.end; ++k)
          m.surface += (k > m.start ? " " : "") + doc.tokens[k];
      }
      if (jm.contains("gold") && !jm.at("gold").is_null())
        m.gold = store.AddEntity(jm.at("gold").get<std::string>());
      if (jm.contains("candidates")) {
        for (const auto& jc : jm.at("candidates")) {
          Candidate c;
          c.entity = store.AddEntity(jc.at("entity").get<std::string>());
          c.prior = jc.at("prior").get<double>();
          const std::string reason = jc.value("reason", "prior-top");
          if (reason == "context-top") {
            c.reason = SelectionReason::kContextTop;
          } else if (reason != "prior-top") {
            throw Error("document '" + doc.id + "': unknown reason '" + reason + "'");
          }
          m.candidates.push_back(c);
        }
      }
      doc.mentions.push_back(std::move(m));
    }
  }
  ValidateDocument(doc);
  return doc;
}

inline nlohmann::json DocumentToJson(const Document& doc, const EmbeddingStore& store) {
  nlohmann::json j;
  j["id"] = doc.id;
  j["tokens"] = doc.tokens;
  j["mentions"] = nlohmann::json::array();
  for (const auto& m : doc.mentions) {
    nlohmann::json jm;
    jm["start"] = m.start;
    jm["end"] = m.end;
    jm["surface"] = m.surface;
    jm["gold"] = m.gold ? nlohmann::json(store.entities().Name(*m.gold)) : nlohmann::json();
    if (!m.candidates.empty()) {
      jm["candidates"] = nlohmann::json::array();
      for (const auto& c : m.candidates)
        jm["candidates"].push_back({{"entity", store.entities().Name(c.entity)},
                                    {"prior", c.prior},
                                    {"reason", ReasonName(c.reason)}});
    }
    j["mentions"].push_back(std::move(jm));
  }
  return j;
}

inline std::vector<Document> ReadJsonLines(std::istream& in, EmbeddingStore& store,
                                           const std::string& name) {
  std::vector<Document> docs;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.find_first_not_of(" \t") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(s);
    } catch (const nlohmann::json::exception& e) {
      throw Error(name + ":" + std::to_string(row) + ": " + e.what());
    }
    try {
      docs.push_back(ParseDocumentJson(j, store));
    } catch (const nlohmann::json::exception& e) {
      throw Error(name + ":" + std::to_string(row) + ": " + e.what());
    }
  }
  return docs;
}

inline void WriteJsonLines(std::ostream& out, std::span<const Document> docs,
                           const EmbeddingStore& store) {
  for (const auto& d : docs) out << DocumentToJson(d, store).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Column text: one token per line, optionally followed by tab-separated
// B|I, surface and entity columns. "-DOCSTART- (id)" opens a document;
// blank lines are sentence breaks. Entity "--NME--" marks a mention whose
// referent is outside the KB and carries no gold label.

inline std::vector<Document> ReadColumnText(std::istream& in, EmbeddingStore& store,
                                            const std::string& name) {
  std::vector<Document> docs;
  std::string line;
  std::size_t row = 0;
  auto open = [&](std::string id) {
    if (!docs.empty()) ValidateDocument(docs.back());
    docs.push_back({std::move(id), {}, {}});
  };
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.starts_with("-DOCSTART-")) {
      auto lp = s.find('('), rp = s.rfind(')');
      open(lp != std::string_view::npos && rp > lp
               ? std::string(s.substr(lp + 1, rp - lp - 1))
               : "doc" + std::to_string(docs.size() + 1));
      continue;
    }
    if (s.empty()) continue;
    if (docs.empty()) open("doc1");
    auto f = SplitOn(s, '\t');
    Document& doc = docs.back();
    doc.tokens.emplace_back(f[0]);
    if (f.size() == 1) continue;
    if (f.size() < 3 || (f[1] != "B" && f[1] != "I"))
      throw Error(name + ":" + std::to_string(row) +
                  ": expected 'token[<TAB>B|I<TAB>surface[<TAB>entity]]'");
    const std::size_t pos = doc.tokens.size() - 1;
    if (f[1] == "I") {
      if (doc.mentions.empty() || doc.mentions.back().end != pos)
        throw Error(name + ":" + std::to_string(row) + ": 'I' without an open mention");
      doc.mentions.back().end = pos + 1;
      continue;
    }
    Mention m;
    m.start = pos;
    m.end = pos + 1;
    m.surface = std::string(f[2]);
    if (f.size() >= 4 && !f[3].empty() && f[3] != "--NME--")
      m.gold = store.AddEntity(f[3]);
    doc.mentions.push_back(std::move(m));
  }
  if (!docs.empty()) ValidateDocument(docs.back());
  return docs;
}

enum class CorpusFormat { kJsonLines, kColumnText };

inline CorpusFormat ParseCorpusFormat(std::string_view s) {
  if (s == "jsonl" || s == "json-lines") return CorpusFormat::kJsonLines;
  if (s == "conll" || s == "column-text") return CorpusFormat::kColumnText;
  throw Error("unknown corpus format '" + std::string(s) + "'");
}

inline Corpus LoadCorpus(const std::string& path, EmbeddingStore& store,
                         CorpusFormat format = CorpusFormat::kJsonLines,
                         Split split = Split::kTest) {
  auto in = OpenForRead(path);
  Corpus c;
  c.split = split;
  c.docs = format == CorpusFormat::kJsonLines ? ReadJsonLines(in, store, path)
                                              : ReadColumnText(in, store, path);
  return c;
}

inline void SaveCorpus(const std::string& path, std::span<const Document> docs,
                       const EmbeddingStore& store) {
  auto out = OpenForWrite(path);
  WriteJsonLines(out, docs, store);
}

// ---------------------------------------------------------------------------
// Predictions: doc id, mention index, start, end, surface, entity (empty
// when the mention was left unannotated).

inline void WritePredictions(std::ostream& out, std::span<const Document> docs,
                             std::span<const Predictions> preds,
                             const EmbeddingStore& store) {
  out << "doc\tmention\tstart\tend\tsurface\tentity\n";
  for (std::size_t d = 0; d < docs.size(); ++d)
    for (std::size_t i = 0; i < docs[d].mentions.size(); ++i) {
      const auto& m = docs[d].mentions[i];
      out << docs[d].id << '\t' << i << '\t' << m.start << '\t' << m.end << '\t'
          << m.surface << '\t';
      if (preds[d][i]) out << store.entities().Name(*preds[d][i]);
      out << '\n';
    }
}

/// Reads a prediction file and aligns it with `docs`. Mentions absent from
/// the file count as unannotated.
inline std::vector<Predictions> LoadPredictions(const std::string& path,
                                                std::span<const Document> docs,
                                                EmbeddingStore& store) {
  std::map<std::string, std::size_t> index;
  for (std::size_t d = 0; d < docs.size(); ++d) index[docs[d].id] = d;
  std::vector<Predictions> out;
  for (const auto& d : docs) out.emplace_back(d.mentions.size());
  auto in = OpenForRead(path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.empty() || (row == 1 && s.starts_with("doc\t"))) continue;
    auto f = SplitOn(s, '\t');
    auto mi = f.size() == 6 ? ParseInt(f[1]) : std::nullopt;
    if (!mi || *mi < 0)
      throw Error(path + ":" + std::to_string(row) + ": malformed prediction row");
    auto it = index.find(std::string(f[0]));
    if (it == index.end())
      throw Error(path + ":" + std::to_string(row) + ": unknown document '" +
                  std::string(f[0]) + "'");
    auto& p = out[it->second];
    if (static_cast<std::size_t>(*mi) >= p.size())
      throw Error(path + ":" + std::to_string(row) + ": mention index out of range");
    if (!f[5].empty()) p[*mi] = store.AddEntity(f[5]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frequency tables and bucketed accuracy.

/// `entity \t frequency` lines.
inline std::map<EntityId, double> LoadFrequencies(const std::string& path,
                                                  EmbeddingStore& store) {
  std::map<EntityId, double> out;
  auto in = OpenForRead(path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.empty() || s.starts_with('#')) continue;
    auto f = SplitOn(s, '\t');
    auto v = f.size() == 2 ? ParseDouble(f[1]) : std::nullopt;
    if (!v || *v < 0.0)
      throw Error(path + ":" + std::to_string(row) + ": expected 'entity<TAB>frequency'");
    out[store.AddEntity(f[0])] = *v;
  }
  return out;
}

struct Bucket {
  std::string label;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const {
    return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
  }
};

/// Buckets with closed upper bounds: (-inf, u0], (u0, u1], ..., (u_last, inf).
struct Bucketing {
  std::vector<double> uppers;
  std::vector<std::string> labels;  // uppers.size() + 1

  std::size_t Index(double v) const {
    for (std::size_t i = 0; i < uppers.size(); ++i)
      if (v <= uppers[i]) return i;
    return uppers.size();
  }

  static Bucketing Frequency() {
    return {{0, 10, 20, 50}, {"0", "1-10", "11-20", "21-50", ">50"}};
  }
  static Bucketing Prior() {
    return {{0.01, 0.03, 0.1, 0.3},
            {"<=0.01", "0.01-0.03", "0.03-0.1", "0.1-0.3", ">0.3"}};
  }
};

struct BreakdownReport {
  std::vector<Bucket> by_frequency;
  std::vector<Bucket> by_prior;
  std::size_t total = 0;  // gold mentions whose gold is among the candidates
};

inline BreakdownReport Breakdown(std::span<const Document> docs,
                                 std::span<const Predictions> preds,
                                 const std::map<EntityId, double>& frequency,
                                 const Bucketing& freq_buckets = Bucketing::Frequency(),
                                 const Bucketing& prior_buckets = Bucketing::Prior()) {
  BreakdownReport r;
  for (auto& l : freq_buckets.labels) r.by_frequency.push_back({l});
  for (auto& l : prior_buckets.labels) r.by_prior.push_back({l});
  for (std::size_t d = 0; d < docs.size(); ++d)
    for (std::size_t i = 0; i < docs[d].mentions.size(); ++i) {
      const auto& m = docs[d].mentions[i];
      auto g = m.GoldIndex();
      if (!g) continue;
      const bool ok = preds[d][i] && *preds[d][i] == *m.gold;
      auto it = frequency.find(*m.gold);
      const double freq = it == frequency.end() ? 0.0 : it->second;
      auto& fb = r.by_frequency[freq_buckets.Index(freq)];
      auto& pb = r.by_prior[prior_buckets.Index(m.candidates[*g].prior)];
      ++fb.count;
      ++pb.count;
      fb.correct += ok;
      pb.correct += ok;
      ++r.total;
    }
  return r;
}

}  // namespace deepel
