// Local disambiguation with hard-pruned neural attention over context words.
//
// For a mention with candidates Gamma and context words c:
//   u(w)      = max_{e in Gamma} x_e^T A x_w            (word support)
//   beta      = softmax over the top-R words of u, 0 elsewhere
//   Psi(e, c) = sum_w beta(w) x_e^T B x_w               (context score)
//   score(e)  = f(Psi(e, c), log p(e|m))                (learned combination)
// with A, B diagonal and f a two-hidden-layer rectified network.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "deepel/autodiff.hpp"
#include "deepel/core.hpp"
#include "deepel/document.hpp"
#include "deepel/optim.hpp"
#include "deepel/sampling.hpp"

namespace deepel {

/// f: R^2 -> R, 2 -> hidden -> hidden -> 1 with ReLU on the hidden layers.
/// Weight matrices are row-major (out x in).
struct FNet {
  std::size_t hidden = 100;
  std::vector<double> w1, b1, w2, b2, w3, b3;

  static FNet Zero(std::size_t hidden = 100) {
    FNet f;
    f.hidden = hidden;
    f.w1.assign(hidden * 2, 0.0);
    f.b1.assign(hidden, 0.0);
    f.w2.assign(hidden * hidden, 0.0);
    f.b2.assign(hidden, 0.0);
    f.w3.assign(hidden, 0.0);
    f.b3.assign(1, 0.0);
    return f;
  }

  /// Uniform(+-1/sqrt(fan_in)) weights and biases, then projected onto the
  /// weight budget.
  static FNet Random(std::size_t hidden, std::uint64_t seed, double radius) {
    FNet f = Zero(hidden);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::vector<double>& v, std::size_t fan_in) {
      const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : v) x = (2.0 * Uniform01(rng) - 1.0) * s;
    };
    fill(f.w1, 2);
    fill(f.b1, 2);
    fill(f.w2, hidden);
    fill(f.b2, hidden);
    fill(f.w3, hidden);
    fill(f.b3, hidden);
    f.Project(radius);
    return f;
  }

  /// Hand-set weights computing a + b for inputs with |a|, |b| <= bound:
  /// the hidden units carry a + bound and b + bound, which stay positive.
  static FNet PassThroughSum(std::size_t hidden = 100, double bound = 100.0) {
    FNet f = Zero(hidden);
    f.w1[0 * 2 + 0] = 1.0;
    f.b1[0] = bound;
    f.w1[1 * 2 + 1] = 1.0;
    f.b1[1] = bound;
    f.w2[0 * hidden + 0] = 1.0;
    f.w2[1 * hidden + 1] = 1.0;
    f.w3[0] = 1.0;
    f.w3[1] = 1.0;
    f.b3[0] = -2.0 * bound;
    return f;
  }

  ParamBlocks Blocks() { return {w1, b1, w2, b2, w3, b3}; }

  std::size_t ParameterCount() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
  }

  /// Rescales each weight matrix onto the Frobenius ball of `radius`.
  void Project(double radius) {
    for (auto* w : {&w1, &w2, &w3}) {
      double sq = 0.0;
      for (double x : *w) sq += x * x;
      const double n = std::sqrt(sq);
      if (n > radius)
        for (double& x : *w) x *= radius / n;
    }
  }

  double Eval(double a, double b) const {
    std::vector<double> h1(hidden), h2(hidden);
    for (std::size_t i = 0; i < hidden; ++i)
      h1[i] = std::max(0.0, w1[i * 2] * a + w1[i * 2 + 1] * b + b1[i]);
    for (std::size_t i = 0; i < hidden; ++i) {
      double s = b2[i];
      for (std::size_t j = 0; j < hidden; ++j) s += w2[i * hidden + j] * h1[j];
      h2[i] = std::max(0.0, s);
    }
    double out = b3[0];
    for (std::size_t j = 0; j < hidden; ++j) out += w3[j] * h2[j];
    return out;
  }
};

struct FNetVars {
  Var w1, b1, w2, b2, w3, b3;
};

inline FNetVars BindParams(Tape& t, const FNet& f) {
  return {t.Parameter(f.w1, f.hidden, 2), t.Parameter(f.b1),
          t.Parameter(f.w2, f.hidden, f.hidden), t.Parameter(f.b2),
          t.Parameter(f.w3, 1, f.hidden), t.Parameter(f.b3)};
}

/// Applies f to the pairs (first[i], second[i]); returns a column vector.
inline Var ApplyF(const FNetVars& f, Var first, Var second) {
  const std::size_t n = first.size();
  Tape::Check(second.size() == n, "f: input length mismatch");
  const Var rows[2] = {first, second};
  Var x = StackRows(rows);                                    // 2 x n
  Var h1 = Relu(AddColumn(MatMul(f.w1, x), f.b1));            // h x n
  Var h2 = Relu(AddColumn(MatMul(f.w2, h1), f.b2));           // h x n
  Var out = AddColumn(MatMul(f.w3, h2), f.b3);                // 1 x n
  return Reshape(out, n, 1);
}

struct LocalParams {
  std::vector<double> a;  // diagonal of A
  std::vector<double> b;  // diagonal of B
  FNet f;

  /// A = B = identity; f random within the weight budget.
  static LocalParams Init(std::size_t dim, std::size_t hidden,
                          std::uint64_t seed, double radius) {
    return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 1.0),
            FNet::Random(hidden, seed, radius)};
  }

  std::size_t dim() const { return a.size(); }

  ParamBlocks Blocks() {
    ParamBlocks blocks = {a, b};
    for (auto s : f.Blocks()) blocks.push_back(s);
    return blocks;
  }
};

struct LocalVars {
  Var a, b;
  FNetVars f;
};

inline LocalVars BindParams(Tape& t, const LocalParams& p) {
  return {t.Parameter(p.a), t.Parameter(p.b), BindParams(t, p.f)};
}

/// A mention's inputs gathered once: context word vectors (K x d), candidate
/// entity vectors (S x d) and floored log priors.
struct PreparedMention {
  std::size_t mention = 0;  // index into Document::mentions
  std::vector<WordId> context;
  std::vector<double> words;
  std::vector<EntityId> entities;
  std::vector<double> entity_vectors;
  std::vector<double> priors;
  std::vector<double> log_priors;
  std::optional<std::size_t> gold;

  std::size_t num_words() const { return context.size(); }
  std::size_t num_candidates() const { return entities.size(); }
};

struct PreparedDoc {
  const Document* doc = nullptr;
  std::vector<PreparedMention> mentions;  // only mentions with candidates
};

inline constexpr double kDefaultPriorFloor = 1e-12;

inline PreparedMention PrepareMention(const Document& doc, std::size_t index,
                                      const EmbeddingStore& store,
                                      std::size_t context_k,
                                      double prior_floor = kDefaultPriorFloor) {
  const Mention& m = doc.mentions[index];
  PreparedMention pm;
  pm.mention = index;
  pm.context = BuildContextWindow(doc, m, store, context_k);
  for (WordId w : pm.context) {
    auto x = store.Word(w);
    pm.words.insert(pm.words.end(), x.begin(), x.end());
  }
  for (const auto& c : m.candidates) {
    pm.entities.push_back(c.entity);
    auto x = store.Entity(c.entity);
    pm.entity_vectors.insert(pm.entity_vectors.end(), x.begin(), x.end());
    pm.priors.push_back(c.prior);
    pm.log_priors.push_back(std::log(std::max(c.prior, prior_floor)));
  }
  pm.gold = m.GoldIndex();
  return pm;
}

inline PreparedDoc PrepareDocument(const Document& doc,
                                   const EmbeddingStore& store,
                                   std::size_t context_k,
                                   double prior_floor = kDefaultPriorFloor) {
  PreparedDoc pd;
  pd.doc = &doc;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i)
    if (!doc.mentions[i].candidates.empty())
      pd.mentions.push_back(PrepareMention(doc, i, store, context_k, prior_floor));
  return pd;
}

inline std::vector<PreparedDoc> PrepareCorpus(std::span<const Document> docs,
                                              const EmbeddingStore& store,
                                              std::size_t context_k,
                                              double prior_floor = kDefaultPriorFloor) {
  std::vector<PreparedDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs)
    out.push_back(PrepareDocument(d, store, context_k, prior_floor));
  return out;
}

// ---------------------------------------------------------------------------
// Tape-level building blocks.

/// u(w) = max_e x_e^T A x_w for every context word.
inline Var SupportScores(const PreparedMention& pm, Var a) {
  if (pm.num_words() == 0 || pm.num_candidates() == 0)
    throw Error("nothing to score");
  Var m = DiagBilinear(pm.words, pm.num_words(), pm.entity_vectors,
                       pm.num_candidates(), a);  // K x S
  return RowMax(m);
}

/// Indices of the R largest entries (ties by lower index) as a mask of the
/// entries to drop.
inline std::vector<bool> PruneMask(std::span<const double> u, std::size_t r) {
  std::vector<bool> drop(u.size(), false);
  if (r >= u.size()) return drop;
  std::vector<std::size_t> order(u.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return u[x] > u[y]; });
  for (std::size_t i = r; i < order.size(); ++i) drop[order[i]] = true;
  return drop;
}

/// Softmax over the top-R support scores; pruned words get exactly zero
/// weight and zero gradient.
inline Var AttentionWeights(Var u, std::size_t r) {
  if (r == 0) throw Error("attention: R must be at least 1");
  return Softmax(MaskedFill(u, PruneMask(u.value(), r), kNegInf));
}

/// Psi(e, c) = sum_w beta(w) x_e^T B x_w for every candidate.
inline Var ContextScores(const PreparedMention& pm, Var b, Var beta) {
  Var m = DiagBilinear(pm.entity_vectors, pm.num_candidates(), pm.words,
                       pm.num_words(), b);  // S x K
  return MatMul(m, beta);
}

struct LocalForward {
  Var psi;     // S x 1 context scores
  Var scores;  // S x 1 combined scores
  std::optional<Var> beta;  // absent when the context is empty
};

/// Full local forward pass for one mention. An empty context yields
/// Psi = 0 for every candidate.
inline LocalForward LocalMentionForward(Tape& t, const LocalVars& v,
                                        const PreparedMention& pm,
                                        std::size_t r) {
  LocalForward out;
  if (pm.num_words() == 0) {
    std::vector<double> zeros(pm.num_candidates(), 0.0);
    out.psi = t.Constant(zeros);
  } else {
    Var u = SupportScores(pm, v.a);
    out.beta = AttentionWeights(u, r);
    out.psi = ContextScores(pm, v.b, *out.beta);
  }
  out.scores = ApplyF(v.f, out.psi, t.Constant(pm.log_priors));
  return out;
}

/// Sum over candidates e != gold of [gamma - s(gold) + s(e)]_+.
inline std::optional<Var> RankingHinges(Var scores, std::size_t gold,
                                        double gamma) {
  std::vector<Var> terms;
  Var good = Element(scores, gold);
  for (std::size_t e = 0; e < scores.size(); ++e)
    if (e != gold) terms.push_back(Hinge(gamma, good, Element(scores, e)));
  if (terms.empty()) return std::nullopt;
  return Sum(Concat(terms));
}

/// Document loss of the local model. Mentions whose gold entity is not
/// among the candidates do not contribute. Returns a zero constant when no
/// mention contributes.
inline Var LocalRankLoss(Tape& t, const LocalVars& v, const PreparedDoc& doc,
                         std::size_t r, double gamma) {
  std::vector<Var> parts;
  for (const auto& pm : doc.mentions) {
    if (!pm.gold) continue;
    auto fwd = LocalMentionForward(t, v, pm, r);
    if (auto h = RankingHinges(fwd.scores, *pm.gold, gamma)) parts.push_back(*h);
  }
  if (parts.empty()) return t.Scalar(0.0);
  return Sum(Concat(parts));
}

/// Index of the maximal score; ties go to the smaller EntityId.
inline std::size_t ArgMaxByEntity(std::span<const double> scores,
                                  std::span<const EntityId> entities) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && entities[i] < entities[best]))
      best = i;
  return best;
}

/// Per mention of the document: the predicted entity, or nullopt for
/// mentions without candidates.
using Predictions = std::vector<std::optional<EntityId>>;

inline Predictions PredictLocal(const LocalParams& p, const PreparedDoc& doc,
                                std::size_t r) {
  Predictions out(doc.doc->mentions.size());
  for (const auto& pm : doc.mentions) {
    Tape t;
    LocalVars v = BindParams(t, p);
    auto fwd = LocalMentionForward(t, v, pm, r);
    out[pm.mention] = pm.entities[ArgMaxByEntity(fwd.scores.value(), pm.entities)];
  }
  return out;
}

/// Distinct context words with nonzero attention, by descending weight.
struct AttendedWord {
  WordId word;
  double weight;
};

inline std::vector<AttendedWord> AttendedWords(const LocalParams& p,
                                               const PreparedMention& pm,
                                               std::size_t r) {
  std::vector<AttendedWord> out;
  if (pm.num_words() == 0) return out;
  Tape t;
  LocalVars v = BindParams(t, p);
  Var beta = AttentionWeights(SupportScores(pm, v.a), r);
  for (std::size_t i = 0; i < pm.num_words(); ++i) {
    if (beta[i] <= 0.0) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& a) { return a.word == pm.context[i]; });
    if (it == out.end()) {
      out.push_back({pm.context[i], beta[i]});
    } else {
      it->weight += beta[i];  // repeated word: total weight
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return x.weight > y.weight;
  });
  return out;
}

}  // namespace deepel
