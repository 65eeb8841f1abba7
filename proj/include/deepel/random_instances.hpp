// Seeded random model instances for gradient checks, inference checks and
// timing.
#pragma once

#include <memory>
#include <random>
#include <vector>

#include "deepel/global.hpp"
#include "deepel/gradcheck.hpp"
#include "deepel/local.hpp"
#include "deepel/sampling.hpp"

namespace deepel {

struct RandomDocSpec {
  std::size_t mentions = 2;
  std::size_t candidates = 3;  // S
  std::size_t words = 10;      // K
  std::size_t dim = 10;
  std::size_t hidden = 100;
  double weight_radius = 3.0;
};

/// A prepared document with random unit word/entity vectors, random priors
/// and gold indices, plus random parameters.
struct RandomDocInstance {
  std::unique_ptr<Document> doc;
  PreparedDoc prepared;
  GlobalParams params;
};

inline RandomDocInstance MakeRandomDoc(std::uint64_t seed, const RandomDocSpec& spec) {
  std::mt19937_64 rng(DeriveSeed(seed, 0x646f63));
  auto unit = [&](std::vector<double>& out) {
    std::vector<double> v(spec.dim);
    for (double& x : v) x = StandardNormal(rng);
    NormalizeInPlace(v);
    out.insert(out.end(), v.begin(), v.end());
  };
  RandomDocInstance inst;
  inst.doc = std::make_unique<Document>();
  inst.doc->id = "random" + std::to_string(seed);
  inst.prepared.doc = inst.doc.get();
  for (std::size_t i = 0; i < spec.mentions; ++i) {
    inst.doc->mentions.push_back(Mention{i, i + 1, "m" + std::to_string(i), {}, {}});
    PreparedMention pm;
    pm.mention = i;
    for (std::size_t k = 0; k < spec.words; ++k) {
      pm.context.push_back(WordId{static_cast<std::uint32_t>(i * spec.words + k)});
      unit(pm.words);
    }
    double z = 0.0;
    for (std::size_t s = 0; s < spec.candidates; ++s) {
      pm.entities.push_back(EntityId{static_cast<std::uint32_t>(i * spec.candidates + s)});
      unit(pm.entity_vectors);
      pm.priors.push_back(0.05 + Uniform01(rng));
      z += pm.priors.back();
    }
    for (double& p : pm.priors) {
      p /= z;
      pm.log_priors.push_back(std::log(p));
    }
    pm.gold = UniformIndex(rng, spec.candidates);
    inst.doc->mentions.back().gold = pm.entities[*pm.gold];
    inst.prepared.mentions.push_back(std::move(pm));
  }
  auto& p = inst.params;
  p.local.a.resize(spec.dim);
  p.local.b.resize(spec.dim);
  p.c.resize(spec.dim);
  for (auto* v : {&p.local.a, &p.local.b})
    for (double& x : *v) x = 1.0 + 0.5 * StandardNormal(rng);
  for (double& x : p.c) x = StandardNormal(rng);
  p.local.f = FNet::Random(spec.hidden, DeriveSeed(seed, 0x66), spec.weight_radius);
  return inst;
}

/// Random CRF with unit candidate vectors, unary scores ~ N(0, 1) and a
/// random diagonal C.
inline CrfInstance MakeRandomCrf(std::uint64_t seed, std::size_t n, std::size_t s,
                                 std::size_t dim, double c_scale = 1.0) {
  std::mt19937_64 rng(DeriveSeed(seed, 0x637266));
  CrfInstance crf;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> u(s), ev;
    for (double& x : u) x = StandardNormal(rng);
    for (std::size_t k = 0; k < s; ++k) {
      std::vector<double> v(dim);
      for (double& x : v) x = StandardNormal(rng);
      NormalizeInPlace(v);
      ev.insert(ev.end(), v.begin(), v.end());
    }
    crf.unary.push_back(std::move(u));
    crf.entity_vectors.push_back(std::move(ev));
  }
  crf.c.resize(dim);
  for (double& x : crf.c) x = c_scale * StandardNormal(rng);
  return crf;
}

/// Exhaustive MAP assignment (first in lexicographic order on ties).
inline std::vector<std::size_t> BruteForceMap(const CrfInstance& crf) {
  std::vector<std::size_t> cur(crf.size(), 0), best;
  double best_score = -std::numeric_limits<double>::infinity();
  while (true) {
    const double g = CrfScore(crf, cur);
    if (g > best_score) {
      best_score = g;
      best = cur;
    }
    std::size_t i = crf.size();
    while (i > 0) {
      --i;
      if (++cur[i] < crf.unary[i].size()) break;
      cur[i] = 0;
      if (i == 0) return best;
    }
    if (crf.size() == 0) return best;
  }
}

/// Gradient check of the local or global ranking loss on one random
/// instance, over every parameter block.
inline GradCheckReport CheckLocalGradient(RandomDocInstance& inst, std::size_t r, double gamma,
                                          const GradCheckOptions& opt) {
  auto& p = inst.params.local;
  ParamBlocks blocks = p.Blocks();
  return GradCheck(
      [&](Tape& t) { return LocalRankLoss(t, BindParams(t, p), inst.prepared, r, gamma); },
      blocks, opt);
}

inline GradCheckReport CheckGlobalGradient(RandomDocInstance& inst, const GlobalSettings& s,
                                           const GradCheckOptions& opt) {
  ParamBlocks blocks = inst.params.Blocks();
  return GradCheck(
      [&](Tape& t) { return GlobalRankLoss(t, BindParams(t, inst.params), inst.prepared, s); },
      blocks, opt);
}

}  // namespace deepel
