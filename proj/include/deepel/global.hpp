// Document-level disambiguation: a fully-connected pairwise CRF over the
// mentions of a document,
//
//   g(e) = sum_i Psi_i(e_i) + sum_{i<j} Phi(e_i, e_j),
//   Phi(e, e') = 2/(n-1) x_e^T C x_e',
//
// approximately maximised by T layers of synchronous, damped max-product
// loopy belief propagation on log-messages:
//
//   m_{i->j}(e)  = max_{e'} Psi_i(e') + Phi(e, e') + sum_{k != j} mbar_{k->i}(e')
//   mbar_{i->j}  = log(delta * softmax(m_{i->j}) + (1 - delta) * exp(mbar_prev))
//   mu_i         = softmax(Psi_i + sum_{k != i} mbar_{k->i})
//   rho_i(e)     = f(mu_i(e), log p(e|m_i))
//
// Every step is differentiable, so the whole unrolled network trains by
// backpropagation of a ranking loss on rho.
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "deepel/autodiff.hpp"
#include "deepel/local.hpp"

namespace deepel {

struct GlobalParams {
  LocalParams local;     // A, B (unary scorer) and f
  std::vector<double> c; // diagonal of C

  /// A = B = C = identity; f random within the weight budget.
  static GlobalParams Init(std::size_t dim, std::size_t hidden,
                           std::uint64_t seed, double radius) {
    return {LocalParams::Init(dim, hidden, seed, radius),
            std::vector<double>(dim, 1.0)};
  }

  ParamBlocks Blocks() {
    ParamBlocks blocks = local.Blocks();
    blocks.push_back(c);
    return blocks;
  }
};

struct GlobalVars {
  LocalVars local;
  Var c;
};

inline GlobalVars BindParams(Tape& t, const GlobalParams& p) {
  return {BindParams(t, p.local), t.Parameter(p.c)};
}

/// Unary and pairwise factors of one document on a tape.
struct CrfFactors {
  std::vector<Var> unary;              // Psi_i, |Gamma_i| x 1
  std::vector<std::vector<Var>> pair;  // pair[i][j]: rows Gamma_j, cols Gamma_i
  std::size_t size() const { return unary.size(); }
};

/// Builds the pairwise matrices Phi for all ordered pairs from per-mention
/// candidate vectors (row-major |Gamma_i| x d).
inline CrfFactors MakeCrfFactors(std::vector<Var> unary,
                                 std::span<const std::vector<double>> entity_vectors,
                                 Var c) {
  CrfFactors crf;
  const std::size_t n = unary.size();
  Tape::Check(entity_vectors.size() == n, "crf: one entity block per mention");
  const std::size_t d = c.size();
  crf.unary = std::move(unary);
  crf.pair.assign(n, std::vector<Var>(n));
  if (n < 2) return crf;
  const double scale = 2.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      Var p = DiagBilinear(entity_vectors[j], entity_vectors[j].size() / d,
                           entity_vectors[i], entity_vectors[i].size() / d, c,
                           scale);
      crf.pair[i][j] = p;
      crf.pair[j][i] = Transpose(p);
    }
  return crf;
}

/// Normalised log-messages mbar_{i->j} over Gamma_j for one layer.
struct MessageState {
  std::size_t layer = 0;
  std::vector<std::vector<Var>> msg;  // msg[i][j], i != j
};

/// Layer-0 messages. They are zero in unnormalised form; stored normalised
/// (log of the uniform distribution) so that damping at layer one mixes
/// with a proper distribution. The constant shift cancels in every max and
/// softmax downstream.
inline MessageState InitialMessages(Tape& t, const CrfFactors& crf) {
  MessageState s;
  const std::size_t n = crf.size();
  s.msg.assign(n, std::vector<Var>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::size_t sj = crf.unary[j].size();
      std::vector<double> v(sj, -std::log(static_cast<double>(sj)));
      s.msg[i][j] = t.Constant(v);
    }
  return s;
}

/// One synchronous max-product layer with damping `delta` in (0, 1].
inline MessageState LbpStep(const MessageState& prev, const CrfFactors& crf,
                            double delta) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw Error("damping must lie in (0, 1]");
  const std::size_t n = crf.size();
  MessageState next;
  next.layer = prev.layer + 1;
  next.msg.assign(n, std::vector<Var>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Var> parts = {crf.unary[i]};
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) parts.push_back(prev.msg[k][i]);
    Var h = AddN(parts);  // Psi_i + all incoming
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Var m = MaxPlus(crf.pair[i][j], Sub(h, prev.msg[j][i]));
      if (delta == 1.0) {
        next.msg[i][j] = LogSoftmax(m);
      } else {
        next.msg[i][j] = Log(Add(Scale(Softmax(m), delta),
                                 Scale(Exp(prev.msg[i][j]), 1.0 - delta)));
      }
    }
  }
  return next;
}

/// mu_i = softmax(Psi_i + sum_{k != i} mbar_{k->i}).
inline std::vector<Var> Beliefs(const MessageState& state, const CrfFactors& crf) {
  std::vector<Var> out;
  const std::size_t n = crf.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Var> parts = {crf.unary[i]};
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) parts.push_back(state.msg[k][i]);
    out.push_back(Softmax(AddN(parts)));
  }
  return out;
}

/// Runs `layers` LBP layers and returns the beliefs. Single-mention
/// documents skip message passing (mu = softmax(Psi)). When `trace` is
/// given, every layer's state (including layer 0) is appended to it.
inline std::vector<Var> RunLbp(Tape& t, const CrfFactors& crf,
                               std::size_t layers, double delta,
                               std::vector<MessageState>* trace = nullptr) {
  if (layers == 0) throw Error("LBP needs at least one layer");
  if (crf.size() == 1) return {Softmax(crf.unary[0])};
  MessageState s = InitialMessages(t, crf);
  if (trace) trace->push_back(s);
  for (std::size_t l = 0; l < layers; ++l) {
    s = LbpStep(s, crf, delta);
    if (trace) trace->push_back(s);
  }
  return Beliefs(s, crf);
}

struct GlobalSettings {
  std::size_t attention_r = 25;
  std::size_t layers = 10;  // T
  double delta = 0.5;
  double gamma = 0.01;
};

struct GlobalForward {
  std::vector<Var> unary;    // Psi_i
  std::vector<Var> beliefs;  // mu_i
  std::vector<Var> rho;      // f(mu_i, log p)
};

inline GlobalForward GlobalDocumentForward(Tape& t, const GlobalVars& v,
                                           const PreparedDoc& doc,
                                           const GlobalSettings& s,
                                           std::vector<MessageState>* trace = nullptr) {
  GlobalForward out;
  if (doc.mentions.empty()) return out;
  std::vector<std::vector<double>> ents;
  for (const auto& pm : doc.mentions) {
    out.unary.push_back(LocalMentionForward(t, v.local, pm, s.attention_r).psi);
    ents.push_back(pm.entity_vectors);
  }
  CrfFactors crf = MakeCrfFactors(out.unary, ents, v.c);
  out.beliefs = RunLbp(t, crf, s.layers, s.delta, trace);
  for (std::size_t i = 0; i < doc.mentions.size(); ++i)
    out.rho.push_back(ApplyF(v.local.f, out.beliefs[i],
                             t.Constant(doc.mentions[i].log_priors)));
  return out;
}

/// Sum over mentions and non-gold candidates of [gamma - rho(gold) + rho(e)]_+.
inline Var GlobalRankLoss(Tape& t, const GlobalVars& v, const PreparedDoc& doc,
                          const GlobalSettings& s) {
  bool any_gold = false;
  for (const auto& pm : doc.mentions) any_gold = any_gold || pm.gold.has_value();
  if (!any_gold) return t.Scalar(0.0);
  GlobalForward fwd = GlobalDocumentForward(t, v, doc, s);
  std::vector<Var> parts;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& pm = doc.mentions[i];
    if (!pm.gold) continue;
    if (auto h = RankingHinges(fwd.rho[i], *pm.gold, s.gamma)) parts.push_back(*h);
  }
  if (parts.empty()) return t.Scalar(0.0);
  return Sum(Concat(parts));
}

inline Predictions PredictGlobal(const GlobalParams& p, const PreparedDoc& doc,
                                 const GlobalSettings& s) {
  Predictions out(doc.doc->mentions.size());
  if (doc.mentions.empty()) return out;
  Tape t;
  GlobalVars v = BindParams(t, p);
  GlobalForward fwd = GlobalDocumentForward(t, v, doc, s);
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& pm = doc.mentions[i];
    out[pm.mention] = pm.entities[ArgMaxByEntity(fwd.rho[i].value(), pm.entities)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-value interface to the CRF, used for inspection and testing.

/// A CRF given directly by unary scores, candidate vectors and C.
struct CrfInstance {
  std::vector<std::vector<double>> unary;           // Psi_i over Gamma_i
  std::vector<std::vector<double>> entity_vectors;  // |Gamma_i| x d, row-major
  std::vector<double> c;                            // diagonal of C

  std::size_t size() const { return unary.size(); }
  std::size_t dim() const { return c.size(); }

  /// Phi between candidate a of mention i and candidate b of mention j.
  double Pairwise(std::size_t i, std::size_t a, std::size_t j, std::size_t b) const {
    const std::size_t n = size();
    if (n < 2) return 0.0;
    const std::size_t d = dim();
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k)
      s += entity_vectors[i][a * d + k] * c[k] * entity_vectors[j][b * d + k];
    return 2.0 / static_cast<double>(n - 1) * s;
  }
};

/// g(e) for an assignment of one candidate index per mention.
inline double CrfScore(const CrfInstance& crf, std::span<const std::size_t> assignment) {
  if (assignment.size() != crf.size()) throw Error("crf_score: one entity per mention");
  double g = 0.0;
  for (std::size_t i = 0; i < crf.size(); ++i) {
    if (assignment[i] >= crf.unary[i].size())
      throw Error("crf_score: entity not in candidate set");
    g += crf.unary[i][assignment[i]];
  }
  for (std::size_t i = 0; i < crf.size(); ++i)
    for (std::size_t j = i + 1; j < crf.size(); ++j)
      g += crf.Pairwise(i, assignment[i], j, assignment[j]);
  return g;
}

/// Plain message values: layer[i][j] over Gamma_j (empty when i == j).
using MessageValues = std::vector<std::vector<std::vector<double>>>;

struct LbpResult {
  std::vector<std::vector<double>> beliefs;
  std::vector<MessageValues> layers;  // layer 0 .. T
};

inline CrfFactors FactorsFromInstance(Tape& t, const CrfInstance& crf) {
  std::vector<Var> unary;
  for (const auto& u : crf.unary) unary.push_back(t.Constant(u));
  return MakeCrfFactors(std::move(unary), crf.entity_vectors, t.Constant(crf.c));
}

inline MessageValues ToValues(const MessageState& s) {
  MessageValues out(s.msg.size(), std::vector<std::vector<double>>(s.msg.size()));
  for (std::size_t i = 0; i < s.msg.size(); ++i)
    for (std::size_t j = 0; j < s.msg.size(); ++j)
      if (i != j) out[i][j].assign(s.msg[i][j].value().begin(), s.msg[i][j].value().end());
  return out;
}

inline LbpResult RunLbp(const CrfInstance& crf, std::size_t layers, double delta) {
  Tape t;
  CrfFactors f = FactorsFromInstance(t, crf);
  std::vector<MessageState> trace;
  auto beliefs = RunLbp(t, f, layers, delta, &trace);
  LbpResult out;
  for (auto& b : beliefs) out.beliefs.emplace_back(b.value().begin(), b.value().end());
  for (auto& s : trace) out.layers.push_back(ToValues(s));
  return out;
}

/// One LBP layer applied to explicit message values.
inline MessageValues LbpStep(const CrfInstance& crf, const MessageValues& prev,
                             double delta) {
  Tape t;
  CrfFactors f = FactorsFromInstance(t, crf);
  MessageState s;
  s.msg.assign(crf.size(), std::vector<Var>(crf.size()));
  for (std::size_t i = 0; i < crf.size(); ++i)
    for (std::size_t j = 0; j < crf.size(); ++j)
      if (i != j) s.msg[i][j] = t.Constant(prev[i][j]);
  return ToValues(LbpStep(s, f, delta));
}

/// rho for plain values: f(mu, log max(prior, floor)).
inline double CombineRho(const FNet& f, double belief, double prior,
                         double prior_floor = kDefaultPriorFloor) {
  if (!std::isfinite(belief) || !std::isfinite(prior))
    throw Error("combine_rho: non-finite input");
  return f.Eval(belief, std::log(std::max(prior, prior_floor)));
}

/// f(Psi, log max(prior, floor)) for plain values.
inline double CombineF(const FNet& f, double context_score, double prior,
                       double prior_floor = kDefaultPriorFloor) {
  if (!std::isfinite(context_score) || !std::isfinite(prior))
    throw Error("combine_f: non-finite input");
  return f.Eval(context_score, std::log(std::max(prior, prior_floor)));
}

}  // namespace deepel
