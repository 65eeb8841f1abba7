// Documents, mentions and their candidate sets.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepel/core.hpp"

namespace deepel {

enum class SelectionReason { kPriorTop, kContextTop };

inline const char* ReasonName(SelectionReason r) {
  return r == SelectionReason::kPriorTop ? "prior-top" : "context-top";
}

struct Candidate {
  EntityId entity;
  double prior = 0.0;  // p(e|m)
  SelectionReason reason = SelectionReason::kPriorTop;
};

struct Mention {
  std::size_t start = 0;  // token span [start, end)
  std::size_t end = 0;
  std::string surface;
  std::optional<EntityId> gold;
  std::vector<Candidate> candidates;  // empty: left unannotated

  /// Index of the gold entity inside `candidates`, if present.
  std::optional<std::size_t> GoldIndex() const {
    if (!gold) return std::nullopt;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].entity == *gold) return i;
    return std::nullopt;
  }
};

struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;  // ordered by start offset
};

/// Context words for one mention: up to floor(K/2) usable words on each
/// side of the span, nearest first on the left reversed back into reading
/// order. Unknown words and stop words are skipped and do not count
/// towards the budget.
inline std::vector<WordId> BuildContextWindow(const Document& doc,
                                              const Mention& m,
                                              const EmbeddingStore& store,
                                              std::size_t k) {
  const std::size_t half = k / 2;
  auto usable = [&](std::size_t i) -> std::optional<WordId> {
    auto w = store.words().Find(doc.tokens[i]);
    if (!w || store.words().IsStop(*w)) return std::nullopt;
    return w;
  };
  std::vector<WordId> left, right;
  for (std::size_t i = m.start; i-- > 0 && left.size() < half;)
    if (auto w = usable(i)) left.push_back(*w);
  for (std::size_t i = m.end; i < doc.tokens.size() && right.size() < half; ++i)
    if (auto w = usable(i)) right.push_back(*w);
  std::vector<WordId> out(left.rbegin(), left.rend());
  out.insert(out.end(), right.begin(), right.end());
  return out;
}

}  // namespace deepel
