// Ranking metrics (NDCG, average precision) and disambiguation metrics
// (in-KB accuracy, micro precision/recall/F1).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace deepel {

/// Binary-relevance NDCG@k with log2 discount. `ranked_labels` holds the
/// relevance of each item in ranked order. Returns 0 when nothing is
/// relevant.
inline double NdcgAtK(std::span<const int> ranked_labels, std::size_t k) {
  const std::size_t cut = std::min(k, ranked_labels.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < cut; ++i)
    if (ranked_labels[i] > 0) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  std::size_t relevant = 0;
  for (int l : ranked_labels) relevant += l > 0;
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(cut, relevant); ++i)
    idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

/// Mean of precision@rank taken at the rank of every relevant item.
inline double AveragePrecision(std::span<const int> ranked_labels) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
    if (ranked_labels[i] > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

struct DisambiguationMetrics {
  std::size_t gold = 0;        // mentions with a gold entity
  std::size_t in_kb_gold = 0;  // ... whose gold entity is in the KB
  std::size_t predicted = 0;   // gold mentions that received a prediction
  std::size_t correct = 0;
  std::size_t correct_in_kb = 0;
  double in_kb_accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing was predicted
  double recall = 0.0;
  double f1 = 0.0;
};

/// One scored mention. `predicted` is false when the mention was left
/// unannotated.
struct MentionOutcome {
  bool predicted = false;
  bool correct = false;
  bool gold_in_kb = true;
};

inline DisambiguationMetrics Evaluate(std::span<const MentionOutcome> outcomes) {
  DisambiguationMetrics m;
  for (const auto& o : outcomes) {
    ++m.gold;
    m.in_kb_gold += o.gold_in_kb;
    m.predicted += o.predicted;
    const bool hit = o.predicted && o.correct;
    m.correct += hit;
    m.correct_in_kb += hit && o.gold_in_kb;
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.precision = ratio(m.correct, m.predicted);
  m.recall = ratio(m.correct, m.gold);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.in_kb_accuracy = ratio(m.correct_in_kb, m.in_kb_gold);
  return m;
}

}  // namespace deepel
