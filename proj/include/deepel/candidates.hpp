// Mention-entity prior construction, candidate selection, and the person
// coreference heuristic.
#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "deepel/core.hpp"
#include "deepel/document.hpp"

namespace deepel {

/// Trims and collapses internal whitespace.
inline std::string NormalizeMention(std::string_view s) {
  std::string out;
  for (auto tok : SplitWhitespace(s)) {
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

inline std::string Lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct EntityPrior {
  EntityId entity;
  double prob = 0.0;
};

enum class PriorSourceKind { kCount, kUniform };

/// One raw index: per mention, entities with counts (count-based) or just a
/// list of entities (uniform).
struct PriorSource {
  PriorSourceKind kind = PriorSourceKind::kCount;
  double weight = 1.0;
  std::map<std::string, std::map<EntityId, double>> entries;

  void Add(std::string_view mention, EntityId e, double count = 1.0) {
    entries[NormalizeMention(mention)][e] += count;
  }
};

/// Reads `mention \t entity \t count` (count-based) or `mention \t entity`
/// (uniform) lines.
inline PriorSource LoadPriorSource(const std::string& path, PriorSourceKind kind,
                                   EmbeddingStore& store, double weight = 1.0) {
  auto in = OpenForRead(path);
  PriorSource src;
  src.kind = kind;
  src.weight = weight;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.empty() || s.starts_with('#')) continue;
    auto f = SplitOn(s, '\t');
    const std::size_t want = kind == PriorSourceKind::kCount ? 3 : 2;
    if (f.size() != want)
      throw Error(path + ":" + std::to_string(row) + ": expected " +
                  std::to_string(want) + " tab-separated fields");
    double count = 1.0;
    if (kind == PriorSourceKind::kCount) {
      auto c = ParseDouble(f[2]);
      if (!c || *c < 0.0 || !std::isfinite(*c))
        throw Error(path + ":" + std::to_string(row) + ": bad count");
      count = *c;
    }
    src.Add(f[0], store.AddEntity(f[1]), count);
  }
  return src;
}

/// p(e|m) for normalized mention strings. Lookup tries an exact,
/// case-sensitive match first and falls back to a case-insensitive one.
class PriorIndex {
 public:
  /// `entries` must be non-empty and is renormalised to sum to one.
  void Set(std::string_view mention, std::vector<EntityPrior> entries) {
    double z = 0.0;
    for (auto& e : entries) {
      if (!(e.prob >= 0.0)) throw Error("prior probabilities must be >= 0");
      z += e.prob;
    }
    if (entries.empty() || z <= 0.0) return;
    for (auto& e : entries) e.prob /= z;
    std::sort(entries.begin(), entries.end(),
              [](const EntityPrior& a, const EntityPrior& b) {
                if (a.prob != b.prob) return a.prob > b.prob;
                return a.entity < b.entity;
              });
    std::string key = NormalizeMention(mention);
    auto lower = Lowercase(key);
    auto it = lower_.find(lower);
    if (it == lower_.end() || key < it->second) lower_[lower] = key;
    table_[key] = std::move(entries);
  }

  /// Entries sorted by descending prior, ties by EntityId; empty if unknown.
  std::span<const EntityPrior> Lookup(std::string_view mention) const {
    const std::string key = NormalizeMention(mention);
    if (auto it = table_.find(key); it != table_.end()) return it->second;
    if (auto lit = lower_.find(Lowercase(key)); lit != lower_.end())
      return table_.at(lit->second);
    return {};
  }

  double Prior(std::string_view mention, EntityId e) const {
    for (const auto& ep : Lookup(mention))
      if (ep.entity == e) return ep.prob;
    return 0.0;
  }

  std::size_t size() const { return table_.size(); }

  /// Mentions in lexicographic order.
  std::vector<std::string> Mentions() const {
    std::vector<std::string> out;
    for (auto& [k, v] : table_) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::unordered_map<std::string, std::vector<EntityPrior>> table_;
  std::unordered_map<std::string, std::string> lower_;
};

/// Merges raw sources: count-based sources contribute their normalised
/// conditional distribution, uniform sources 1/|list| per entity, and the
/// prior is the weighted mean over the sources that know the mention.
inline PriorIndex BuildPrior(std::span<const PriorSource> sources) {
  std::map<std::string, std::map<EntityId, double>> sum;
  std::map<std::string, double> weight;
  for (const auto& src : sources) {
    if (!(src.weight > 0.0)) throw Error("prior source weight must be > 0");
    for (const auto& [mention, ents] : src.entries) {
      double z = 0.0;
      for (auto& [e, c] : ents)
        z += src.kind == PriorSourceKind::kCount ? c : 1.0;
      if (z <= 0.0) continue;  // abstains
      for (auto& [e, c] : ents) {
        const double p = (src.kind == PriorSourceKind::kCount ? c : 1.0) / z;
        if (p > 0.0) sum[mention][e] += src.weight * p;
      }
      weight[mention] += src.weight;
    }
  }
  PriorIndex index;
  for (auto& [mention, ents] : sum) {
    std::vector<EntityPrior> v;
    for (auto& [e, s] : ents) v.push_back({e, s / weight[mention]});
    index.Set(mention, std::move(v));
  }
  return index;
}

/// Reads a merged prior file (`mention \t entity \t probability`).
inline PriorIndex LoadPriorIndex(const std::string& path, EmbeddingStore& store) {
  PriorSource src = LoadPriorSource(path, PriorSourceKind::kCount, store);
  return BuildPrior(std::span<const PriorSource>(&src, 1));
}

inline void SavePriorIndex(const std::string& path, const PriorIndex& index,
                           const EmbeddingStore& store) {
  auto out = OpenForWrite(path);
  for (const auto& m : index.Mentions())
    for (const auto& ep : index.Lookup(m))
      out << m << '\t' << store.entities().Name(ep.entity) << '\t'
          << FormatDouble(ep.prob) << '\n';
}

struct SelectionOptions {
  std::size_t max_candidates = 7;  // S
  std::size_t pre_cut = 30;
  std::size_t prior_top = 4;
  std::size_t context_top = 3;
};

/// Builds Gamma(m): the top `pre_cut` entities by prior are kept, of which
/// `prior_top` are taken by prior and up to `context_top` more by the dot
/// product of the entity vector with the mean context word vector. Entities
/// without a vector are ignored. Unknown mentions get an empty set.
inline std::vector<Candidate> SelectCandidates(std::string_view mention,
                                               std::span<const WordId> context,
                                               const PriorIndex& prior,
                                               const EmbeddingStore& store,
                                               const SelectionOptions& opt = {}) {
  std::vector<EntityPrior> pool;
  for (const auto& ep : prior.Lookup(mention)) {
    if (pool.size() == opt.pre_cut) break;
    if (store.HasEntityVector(ep.entity)) pool.push_back(ep);
  }
  const std::size_t target = std::min(opt.max_candidates, pool.size());
  std::vector<Candidate> out;
  if (pool.size() <= opt.max_candidates) {
    for (const auto& ep : pool)
      out.push_back({ep.entity, ep.prob, SelectionReason::kPriorTop});
    return out;
  }

  std::vector<bool> taken(pool.size(), false);
  for (std::size_t i = 0; i < std::min(opt.prior_top, target); ++i) {
    out.push_back({pool[i].entity, pool[i].prob, SelectionReason::kPriorTop});
    taken[i] = true;
  }

  std::vector<double> mean(store.dim(), 0.0);
  for (WordId w : context) {
    auto x = store.Word(w);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += x[k];
  }
  if (!context.empty())
    for (double& v : mean) v /= static_cast<double>(context.size());
  std::vector<std::pair<double, std::size_t>> by_context;
  for (std::size_t i = 0; i < pool.size(); ++i)
    by_context.push_back({Dot(store.Entity(pool[i].entity), mean), i});
  // Pool order already encodes (prior desc, EntityId), so a stable sort on
  // the score alone breaks ties the same way.
  std::stable_sort(by_context.begin(), by_context.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t added = 0;
  for (auto& [score, i] : by_context) {
    if (added == opt.context_top || out.size() == target) break;
    if (taken[i]) continue;
    out.push_back({pool[i].entity, pool[i].prob, SelectionReason::kContextTop});
    taken[i] = true;
    ++added;
  }
  for (std::size_t i = 0; i < pool.size() && out.size() < target; ++i) {
    if (taken[i]) continue;
    out.push_back({pool[i].entity, pool[i].prob, SelectionReason::kPriorTop});
    taken[i] = true;
  }
  return out;
}

/// Runs SelectCandidates for every mention of a document using its K-word
/// context window.
inline void SelectDocumentCandidates(Document& doc, const PriorIndex& prior,
                                     const EmbeddingStore& store,
                                     std::size_t context_k,
                                     const SelectionOptions& opt = {}) {
  for (auto& m : doc.mentions) {
    auto ctx = BuildContextWindow(doc, m, store, context_k);
    m.candidates = SelectCandidates(m.surface, ctx, prior, store, opt);
  }
}

namespace detail {

inline bool ContainsSubsequence(std::span<const std::string_view> hay,
                                std::span<const std::string_view> needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + i)) return true;
  return false;
}

}  // namespace detail

/// Person coreference: a mention whose most probable entity is a person and
/// whose words occur contiguously inside longer person mentions of the same
/// document takes the union of those mentions' candidate sets, pruned to
/// `max_candidates` by prior. Merged entries keep the prior they carried in
/// the containing mention. Mentions are judged on the sets as they were
/// before any merge.
inline void CorefPersonMerge(Document& doc, const PriorIndex& prior,
                             const std::function<bool(EntityId)>& is_person,
                             std::size_t max_candidates = 7) {
  const std::size_t n = doc.mentions.size();
  std::vector<std::vector<std::string_view>> words(n);
  std::vector<bool> person(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    words[i] = SplitWhitespace(doc.mentions[i].surface);
    auto entries = prior.Lookup(doc.mentions[i].surface);
    std::optional<EntityId> top;
    if (!entries.empty()) {
      top = entries[0].entity;
    } else if (!doc.mentions[i].candidates.empty()) {
      auto& c = doc.mentions[i].candidates;
      top = std::max_element(c.begin(), c.end(), [](auto& a, auto& b) {
              if (a.prior != b.prior) return a.prior < b.prior;
              return a.entity > b.entity;
            })->entity;
    }
    person[i] = top && is_person(*top);
  }
  std::vector<std::vector<Candidate>> original;
  for (auto& m : doc.mentions) original.push_back(m.candidates);

  for (std::size_t i = 0; i < n; ++i) {
    if (!person[i]) continue;
    std::map<EntityId, Candidate> merged;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !person[j] || words[j].size() <= words[i].size()) continue;
      if (!detail::ContainsSubsequence(words[j], words[i])) continue;
      any = true;
      for (const auto& c : original[j]) {
        auto [it, inserted] = merged.emplace(c.entity, c);
        if (!inserted && c.prior > it->second.prior) it->second.prior = c.prior;
      }
    }
    if (!any) continue;
    std::vector<Candidate> set;
    for (auto& [e, c] : merged) set.push_back(c);
    std::sort(set.begin(), set.end(), [](const Candidate& a, const Candidate& b) {
      if (a.prior != b.prior) return a.prior > b.prior;
      return a.entity < b.entity;
    });
    if (set.size() > max_candidates) set.resize(max_candidates);
    doc.mentions[i].candidates = std::move(set);
  }
}

/// Person flags from `entity \t is_person{0,1}` lines.
inline std::unordered_set<EntityId> LoadPersons(const std::string& path,
                                                EmbeddingStore& store) {
  auto in = OpenForRead(path);
  std::unordered_set<EntityId> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.empty() || s.starts_with('#')) continue;
    auto f = SplitOn(s, '\t');
    auto flag = f.size() == 2 ? ParseInt(f[1]) : std::nullopt;
    if (!flag || (*flag != 0 && *flag != 1))
      throw Error(path + ":" + std::to_string(row) +
                  ": expected 'entity<TAB>0|1'");
    if (*flag == 1) out.insert(store.AddEntity(f[0]));
  }
  return out;
}

/// Percentage of gold-annotated mentions whose candidate set holds the gold
/// entity. 100 when there are no gold mentions.
inline double GoldRecall(std::span<const Document> docs) {
  std::size_t gold = 0, hit = 0;
  for (const auto& d : docs)
    for (const auto& m : d.mentions) {
      if (!m.gold) continue;
      ++gold;
      hit += m.GoldIndex().has_value();
    }
  return gold == 0 ? 100.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(gold);
}

}  // namespace deepel
