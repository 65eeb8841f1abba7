// Entity embeddings bootstrapped from word vectors.
//
// Each entity vector z is fit on the unit sphere so that words co-occurring
// with the entity (w+ ~ p(w|e)) score at least a margin above words drawn
// from the smoothed unigram distribution (w- ~ q(w) ~ p(w)^alpha):
//
//   J(z; e) = E_{w+|e} E_{w-} [gamma - <z, x_{w+} - x_{w-}>]_+,  ||z|| = 1.
//
// Entities are trained independently of each other.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "deepel/core.hpp"
#include "deepel/metrics.hpp"
#include "deepel/sampling.hpp"

namespace deepel {

enum class CountSource { kDescription, kHyperlink };

struct WordCount {
  WordId word;
  double count = 0.0;
};

/// Word-entity co-occurrence counts #(w, e) split by source, plus the
/// corpus-wide word frequencies behind the negative distribution.
class CooccurrenceCounts {
 public:
  explicit CooccurrenceCounts(double alpha = 0.6) : alpha_(alpha) {}

  double alpha() const { return alpha_; }
  void set_alpha(double a) { alpha_ = a; }

  void Add(EntityId e, WordId w, double count, CountSource source) {
    if (!(count >= 0.0) || !std::isfinite(count))
      throw Error("co-occurrence counts must be finite and nonnegative");
    if (count == 0.0) return;
    auto& table = source == CountSource::kDescription ? description_ : hyperlink_;
    if (table.size() <= e.value) table.resize(e.value + 1);
    table[e.value][w] += count;
    if (frequency_.size() <= w.value) frequency_.resize(w.value + 1, 0.0);
    frequency_[w.value] += count;
  }

  /// Counts for one source, ordered by WordId.
  std::vector<WordCount> Words(EntityId e, CountSource source) const {
    const auto& table =
        source == CountSource::kDescription ? description_ : hyperlink_;
    std::vector<WordCount> out;
    if (e.value >= table.size()) return out;
    for (auto& [w, c] : table[e.value]) out.push_back({w, c});
    return out;
  }

  /// Both sources summed, ordered by WordId.
  std::vector<WordCount> Merged(EntityId e) const {
    std::map<WordId, double> m;
    for (auto src : {CountSource::kDescription, CountSource::kHyperlink})
      for (auto& wc : Words(e, src)) m[wc.word] += wc.count;
    std::vector<WordCount> out;
    for (auto& [w, c] : m) out.push_back({w, c});
    return out;
  }

  double Count(EntityId e, WordId w) const {
    double s = 0.0;
    for (auto* table : {&description_, &hyperlink_}) {
      if (e.value >= table->size()) continue;
      auto it = (*table)[e.value].find(w);
      if (it != (*table)[e.value].end()) s += it->second;
    }
    return s;
  }

  bool Trainable(EntityId e) const { return !Merged(e).empty(); }

  std::size_t entity_capacity() const {
    return std::max(description_.size(), hyperlink_.size());
  }

  /// Unnormalised corpus frequency p(w) * N indexed by WordId.
  const std::vector<double>& word_frequency() const { return frequency_; }

  /// q(w) proportional to p(w)^alpha over a vocabulary of `vocab_size` words.
  std::vector<double> NegativeDistribution(std::size_t vocab_size) const {
    std::vector<double> q(vocab_size, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < std::min(vocab_size, frequency_.size()); ++i) {
      if (frequency_[i] > 0.0) q[i] = std::pow(frequency_[i], alpha_);
      z += q[i];
    }
    if (z <= 0.0) throw Error("negative distribution: no word frequencies");
    for (double& x : q) x /= z;
    return q;
  }

 private:
  double alpha_;
  std::vector<std::map<WordId, double>> description_;
  std::vector<std::map<WordId, double>> hyperlink_;
  std::vector<double> frequency_;
};

struct DescriptionDoc {
  EntityId entity;
  std::vector<std::string> tokens;
};

/// Tokens surrounding one hyperlink anchor [anchor_begin, anchor_end).
struct HyperlinkContext {
  EntityId entity;
  std::vector<std::string> tokens;
  std::size_t anchor_begin = 0;
  std::size_t anchor_end = 0;
};

/// Counts words from description pages and from the `window` tokens on
/// either side of every hyperlink anchor. Tokens absent from the word table
/// and stop words are skipped.
inline CooccurrenceCounts IngestCounts(const EmbeddingStore& store,
                                       std::span<const DescriptionDoc> docs,
                                       std::span<const HyperlinkContext> links,
                                       std::size_t window, double alpha = 0.6) {
  CooccurrenceCounts counts(alpha);
  auto add = [&](EntityId e, const std::string& tok, CountSource src) {
    auto w = store.words().Find(tok);
    if (!w || store.words().IsStop(*w)) return;
    counts.Add(e, *w, 1.0, src);
  };
  for (const auto& d : docs)
    for (const auto& t : d.tokens) add(d.entity, t, CountSource::kDescription);
  for (const auto& l : links) {
    if (l.anchor_begin > l.anchor_end || l.anchor_end > l.tokens.size())
      throw Error("hyperlink anchor outside its token list");
    const std::size_t lo = l.anchor_begin >= window ? l.anchor_begin - window : 0;
    const std::size_t hi = std::min(l.tokens.size(), l.anchor_end + window);
    for (std::size_t i = lo; i < l.anchor_begin; ++i)
      add(l.entity, l.tokens[i], CountSource::kHyperlink);
    for (std::size_t i = l.anchor_end; i < hi; ++i)
      add(l.entity, l.tokens[i], CountSource::kHyperlink);
  }
  return counts;
}

/// Reads `entity \t word \t count [\t description|hyperlink]` lines. Entities
/// are registered in the store; unknown words and stop words are skipped.
inline CooccurrenceCounts LoadCounts(const std::string& path,
                                     EmbeddingStore& store, double alpha) {
  auto in = OpenForRead(path);
  CooccurrenceCounts counts(alpha);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.empty() || s.starts_with('#')) continue;
    auto f = SplitOn(s, '\t');
    if (f.size() != 3 && f.size() != 4)
      throw Error(path + ":" + std::to_string(row) +
                  ": expected 'entity<TAB>word<TAB>count[<TAB>source]'");
    auto c = ParseDouble(f[2]);
    if (!c || *c < 0.0 || !std::isfinite(*c))
      throw Error(path + ":" + std::to_string(row) + ": bad count");
    CountSource src = CountSource::kDescription;
    if (f.size() == 4) {
      if (f[3] == "hyperlink") {
        src = CountSource::kHyperlink;
      } else if (f[3] != "description") {
        throw Error(path + ":" + std::to_string(row) + ": unknown source '" +
                    std::string(f[3]) + "'");
      }
    }
    const EntityId e = store.AddEntity(f[0]);
    auto w = store.words().Find(f[1]);
    if (!w || store.words().IsStop(*w)) continue;
    counts.Add(e, *w, *c, src);
  }
  return counts;
}

inline void SaveCounts(const std::string& path, const CooccurrenceCounts& counts,
                       const EmbeddingStore& store) {
  auto out = OpenForWrite(path);
  for (std::uint32_t i = 0; i < counts.entity_capacity(); ++i) {
    EntityId e{i};
    for (auto src : {CountSource::kDescription, CountSource::kHyperlink})
      for (const auto& wc : counts.Words(e, src))
        out << store.entities().Name(e) << '\t' << store.words().Name(wc.word)
            << '\t' << FormatDouble(wc.count) << '\t'
            << (src == CountSource::kDescription ? "description" : "hyperlink")
            << '\n';
  }
}

/// [gamma - <z, x_pos - x_neg>]_+
inline double HingeEmbed(std::span<const double> z, std::span<const double> x_pos,
                         std::span<const double> x_neg, double gamma) {
  if (z.size() != x_pos.size() || z.size() != x_neg.size())
    throw Error("hinge_embed: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * (x_pos[i] - x_neg[i]);
  return std::max(0.0, gamma - s);
}

struct EmbedTrainConfig {
  double gamma = 0.1;
  std::size_t positives = 20;           // per iteration
  std::size_t negatives = 5;            // per positive
  double learning_rate = 0.3;           // Adagrad
  std::size_t description_iterations = 400;
  std::size_t hyperlink_iterations = 2000;  // upper bound for phase two
  std::size_t window = 20;
  double alpha = 0.6;
  // (positive, negative) pairs summed into one Adagrad step.
  std::size_t pairs_per_step = 1;
  std::size_t eval_every = 50;  // phase-two iterations between validations
  std::size_t patience = 3;     // non-improving validations before stopping
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void Validate() const {
    if (!(gamma > 0.0) || positives == 0 || negatives == 0 ||
        !(learning_rate > 0.0) || window == 0 || pairs_per_step == 0 ||
        eval_every == 0 || patience == 0 || !(alpha > 0.0))
      throw Error("embedding training configuration must be positive");
  }
};

/// Positive and negative samplers shared by the training of one entity.
struct EntitySamplers {
  std::vector<WordId> support;
  AliasTable positive;
};

inline std::optional<EntitySamplers> MakeEntitySamplers(
    std::span<const WordCount> words) {
  if (words.empty()) return std::nullopt;
  EntitySamplers s;
  std::vector<double> w;
  for (const auto& wc : words) {
    s.support.push_back(wc.word);
    w.push_back(wc.count);
  }
  s.positive = AliasTable(w);
  return s;
}

/// Training state of one entity: the unit vector, its Adagrad accumulator
/// and a private random stream.
class EntityTrainer {
 public:
  EntityTrainer(EntityId e, std::size_t dim, std::uint64_t seed)
      : entity_(e), z_(dim), accum_(dim, 0.0), rng_(DeriveSeed(seed, e.value)) {
    for (double& x : z_) x = StandardNormal(rng_);
    NormalizeInPlace(z_);
  }

  EntityId entity() const { return entity_; }
  std::span<const double> vector() const { return z_; }

  /// Runs `iterations` sampling iterations on the given positives. A new
  /// phase restarts the Adagrad accumulator; `fresh_phase = false` continues
  /// the current one.
  void RunPhase(const EntitySamplers& pos, const AliasTable& negatives,
                const EmbeddingStore& store, const EmbedTrainConfig& cfg,
                std::size_t iterations, bool fresh_phase = true) {
    if (fresh_phase) std::fill(accum_.begin(), accum_.end(), 0.0);
    const std::size_t d = z_.size();
    std::vector<double> grad(d, 0.0);
    std::size_t pending = 0;
    for (std::size_t it = 0; it < iterations; ++it) {
      for (std::size_t p = 0; p < cfg.positives; ++p) {
        auto xp = store.Word(pos.support[pos.positive.Sample(rng_)]);
        for (std::size_t n = 0; n < cfg.negatives; ++n) {
          auto xn = store.Word(WordId{static_cast<std::uint32_t>(
              negatives.Sample(rng_))});
          if (HingeEmbed(z_, xp, xn, cfg.gamma) > 0.0)
            for (std::size_t k = 0; k < d; ++k) grad[k] -= xp[k] - xn[k];
          if (++pending == cfg.pairs_per_step) {
            Step(grad, cfg.learning_rate);
            pending = 0;
          }
        }
      }
    }
    if (pending > 0) Step(grad, cfg.learning_rate);
  }

 private:
  void Step(std::vector<double>& grad, double lr) {
    for (std::size_t k = 0; k < z_.size(); ++k) {
      accum_[k] += grad[k] * grad[k];
      if (grad[k] != 0.0) z_[k] -= lr * grad[k] / (std::sqrt(accum_[k]) + 1e-10);
      grad[k] = 0.0;
    }
    NormalizeInPlace(z_);
  }

  EntityId entity_;
  std::vector<double> z_;
  std::vector<double> accum_;
  std::mt19937_64 rng_;
};

inline AliasTable NegativeSampler(const CooccurrenceCounts& counts,
                                  const EmbeddingStore& store) {
  return AliasTable(counts.NegativeDistribution(store.words().size()));
}

/// Trains one entity in isolation: description iterations, then a fixed
/// number of hyperlink iterations. Returns the unit vector and stores it.
/// Throws for entities without any counts.
inline std::vector<double> TrainEntity(EntityId e,
                                       const CooccurrenceCounts& counts,
                                       const EmbedTrainConfig& cfg,
                                       EmbeddingStore& store,
                                       std::size_t hyperlink_iterations = 0) {
  cfg.Validate();
  if (!counts.Trainable(e))
    throw Error("entity '" + store.entities().Name(e) + "' is untrainable");
  const AliasTable neg = NegativeSampler(counts, store);
  EntityTrainer trainer(e, store.dim(), cfg.seed);
  const auto desc = counts.Words(e, CountSource::kDescription);
  const auto link = counts.Words(e, CountSource::kHyperlink);
  if (auto s = MakeEntitySamplers(desc.empty() ? link : desc))
    trainer.RunPhase(*s, neg, store, cfg, cfg.description_iterations);
  if (auto s = MakeEntitySamplers(link); s && hyperlink_iterations > 0)
    trainer.RunPhase(*s, neg, store, cfg, hyperlink_iterations);
  store.SetEntity(e, trainer.vector());
  return {trainer.vector().begin(), trainer.vector().end()};
}

// ---------------------------------------------------------------------------
// Relatedness evaluation.

struct RelatednessQuery {
  EntityId target;
  std::vector<std::pair<EntityId, int>> candidates;  // (entity, label 0/1)
};

struct RelatednessMetrics {
  double ndcg1 = 0.0, ndcg5 = 0.0, ndcg10 = 0.0, map = 0.0;
  double validation_score = 0.0;  // sum of the four metrics
  std::size_t scored = 0;
  std::size_t excluded = 0;  // unembedded entities or one-sided labels
};

/// Ranks each query's candidates by cosine to the target (ties by EntityId)
/// and averages NDCG@{1,5,10} and average precision over scored queries.
inline RelatednessMetrics EvalRelatedness(
    std::span<const RelatednessQuery> queries, const EmbeddingStore& store) {
  RelatednessMetrics m;
  for (const auto& q : queries) {
    bool ok = store.HasEntityVector(q.target);
    int pos = 0, neg = 0;
    for (auto& [e, label] : q.candidates) {
      ok = ok && store.HasEntityVector(e);
      (label > 0 ? pos : neg)++;
    }
    if (!ok || pos == 0 || neg == 0) {
      ++m.excluded;
      continue;
    }
    auto t = store.Entity(q.target);
    std::vector<std::pair<double, std::pair<EntityId, int>>> ranked;
    for (auto& c : q.candidates)
      ranked.push_back({Cosine(t, store.Entity(c.first)), c});
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second.first < b.second.first;
    });
    std::vector<int> labels;
    for (auto& r : ranked) labels.push_back(r.second.second > 0 ? 1 : 0);
    m.ndcg1 += NdcgAtK(labels, 1);
    m.ndcg5 += NdcgAtK(labels, 5);
    m.ndcg10 += NdcgAtK(labels, 10);
    m.map += AveragePrecision(labels);
    ++m.scored;
  }
  if (m.scored > 0) {
    const double n = static_cast<double>(m.scored);
    m.ndcg1 /= n;
    m.ndcg5 /= n;
    m.ndcg10 /= n;
    m.map /= n;
  }
  m.validation_score = m.ndcg1 + m.ndcg5 + m.ndcg10 + m.map;
  return m;
}

/// Reads `target \t candidate \t label` lines; consecutive lines sharing a
/// target form one query. Entity names are registered in the store.
inline std::vector<RelatednessQuery> LoadRelatednessQueries(
    const std::string& path, EmbeddingStore& store) {
  auto in = OpenForRead(path);
  std::vector<RelatednessQuery> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = StripCr(line);
    if (s.empty() || s.starts_with('#')) continue;
    auto f = SplitOn(s, '\t');
    auto label = f.size() == 3 ? ParseInt(f[2]) : std::nullopt;
    if (!label || (*label != 0 && *label != 1))
      throw Error(path + ":" + std::to_string(row) +
                  ": expected 'target<TAB>candidate<TAB>0|1'");
    const EntityId t = store.AddEntity(f[0]);
    const EntityId c = store.AddEntity(f[1]);
    if (out.empty() || out.back().target != t) out.push_back({t, {}});
    out.back().candidates.emplace_back(c, static_cast<int>(*label));
  }
  return out;
}

inline void SaveRelatednessQueries(const std::string& path,
                                   std::span<const RelatednessQuery> queries,
                                   const EmbeddingStore& store) {
  auto out = OpenForWrite(path);
  for (const auto& q : queries)
    for (auto& [e, label] : q.candidates)
      out << store.entities().Name(q.target) << '\t'
          << store.entities().Name(e) << '\t' << label << '\n';
}

// ---------------------------------------------------------------------------
// Full schedule over all entities.

struct EmbedTrainReport {
  std::vector<EntityId> trained;
  std::vector<EntityId> untrainable;
  std::vector<double> validation_scores;  // one per phase-two evaluation
  double best_validation_score = 0.0;
  std::size_t hyperlink_iterations_used = 0;
};

namespace detail {

template <class Fn>
void ParallelFor(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Two-phase training of every entity with counts. Phase one uses only
/// description counts; phase two uses hyperlink counts in chunks of
/// `eval_every` iterations, validating on `validation` after each chunk and
/// keeping the best snapshot. Without validation queries phase two runs for
/// `hyperlink_iterations`.
inline EmbedTrainReport TrainEmbeddings(
    const CooccurrenceCounts& counts, const EmbedTrainConfig& cfg,
    EmbeddingStore& store, std::span<const RelatednessQuery> validation = {},
    std::ostream* log = nullptr) {
  cfg.Validate();
  EmbedTrainReport report;
  const AliasTable neg = NegativeSampler(counts, store);

  std::vector<EntityTrainer> trainers;
  std::vector<std::optional<EntitySamplers>> desc, link;
  for (std::uint32_t i = 0; i < store.entities().size(); ++i) {
    EntityId e{i};
    if (!counts.Trainable(e)) {
      report.untrainable.push_back(e);
      if (log)
        *log << "warning: entity '" << store.entities().Name(e)
             << "' has no usable co-occurrence counts; skipped\n";
      continue;
    }
    trainers.emplace_back(e, store.dim(), cfg.seed);
    report.trained.push_back(e);
    auto d = counts.Words(e, CountSource::kDescription);
    auto l = counts.Words(e, CountSource::kHyperlink);
    desc.push_back(MakeEntitySamplers(d.empty() ? l : d));
    link.push_back(MakeEntitySamplers(l));
  }

  detail::ParallelFor(trainers.size(), cfg.threads, [&](std::size_t i) {
    trainers[i].RunPhase(*desc[i], neg, store, cfg, cfg.description_iterations);
  });
  auto publish = [&] {
    for (auto& t : trainers) store.SetEntity(t.entity(), t.vector());
  };
  publish();

  const bool any_links =
      std::any_of(link.begin(), link.end(), [](auto& s) { return s.has_value(); });
  if (!any_links || cfg.hyperlink_iterations == 0) return report;

  if (validation.empty()) {
    detail::ParallelFor(trainers.size(), cfg.threads, [&](std::size_t i) {
      if (link[i])
        trainers[i].RunPhase(*link[i], neg, store, cfg, cfg.hyperlink_iterations);
    });
    report.hyperlink_iterations_used = cfg.hyperlink_iterations;
    publish();
    return report;
  }

  double best = EvalRelatedness(validation, store).validation_score;
  report.validation_scores.push_back(best);
  VectorTable best_snapshot = store.EntityTable();
  std::size_t since_best = 0, used = 0, best_used = 0;
  while (used < cfg.hyperlink_iterations && since_best < cfg.patience) {
    const std::size_t chunk =
        std::min(cfg.eval_every, cfg.hyperlink_iterations - used);
    detail::ParallelFor(trainers.size(), cfg.threads, [&](std::size_t i) {
      if (link[i])
        trainers[i].RunPhase(*link[i], neg, store, cfg, chunk, used == 0);
    });
    used += chunk;
    publish();
    const double score = EvalRelatedness(validation, store).validation_score;
    report.validation_scores.push_back(score);
    if (log) *log << "hyperlink iter " << used << " validation " << score << "\n";
    if (score > best) {
      best = score;
      best_snapshot = store.EntityTable();
      since_best = 0;
      best_used = used;
    } else {
      ++since_best;
    }
  }
  store.LoadEntities(best_snapshot);
  report.best_validation_score = best;
  report.hyperlink_iterations_used = best_used;
  return report;
}

}  // namespace deepel
