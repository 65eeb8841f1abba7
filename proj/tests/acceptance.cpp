// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Usage: deepel_acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "deepel/deepel.hpp"
#include "oracles.hpp"

using namespace deepel;

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string Num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;
  void Note(const std::string& s) { details.push_back(s); }
  void Require(bool ok, const std::string& what) {
    Note(std::string(ok ? "ok   " : "FAIL ") + what);
    pass = pass && ok;
  }
};

// Worst deviation from 1 of the total mass of any message or belief seen in
// any LBP run of this program.
double g_worst_mass_error = 0.0;
std::size_t g_messages_checked = 0;

void TrackMass(const LbpResult& r) {
  for (const auto& layer : r.layers)
    for (const auto& row : layer)
      for (const auto& msg : row) {
        if (msg.empty()) continue;
        double z = 0.0;
        for (double v : msg) z += std::exp(v);
        g_worst_mass_error = std::max(g_worst_mass_error, std::abs(z - 1.0));
        ++g_messages_checked;
      }
  for (const auto& b : r.beliefs) {
    double z = 0.0;
    for (double v : b) z += v;
    g_worst_mass_error = std::max(g_worst_mass_error, std::abs(z - 1.0));
  }
}

oracle::Crf ToOracle(const CrfInstance& crf) {
  oracle::Crf o;
  o.unary = crf.unary;
  const std::size_t n = crf.size(), d = crf.dim();
  o.phi = [&crf, n, d](std::size_t i, std::size_t a, std::size_t j, std::size_t b) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k)
      s += crf.entity_vectors[i][a * d + k] * crf.c[k] * crf.entity_vectors[j][b * d + k];
    return 2.0 * s / static_cast<double>(n - 1);
  };
  return o;
}

std::vector<std::size_t> BeliefArgmax(const LbpResult& r) {
  std::vector<std::size_t> out;
  for (const auto& b : r.beliefs)
    out.push_back(static_cast<std::size_t>(std::max_element(b.begin(), b.end()) - b.begin()));
  return out;
}

// The benchmark configuration used by `run-experiment --synthetic`.
ExperimentConfig Benchmark(std::uint64_t seed) {
  ExperimentConfig c;
  c.context_k = 40;
  c.local.attention_r = 10;
  c.local.schedule.max_epochs = 30;
  c.global.schedule.max_epochs = 30;
  c.SetSeed(seed);
  return c;
}

std::map<std::uint64_t, std::unique_ptr<PreparedExperiment>> g_prepared;

PreparedExperiment& Prepared(std::uint64_t seed) {
  auto& slot = g_prepared[seed];
  if (!slot) slot = std::make_unique<PreparedExperiment>(PrepareExperiment(Benchmark(seed)));
  return *slot;
}

struct SeedRun {
  ExperimentResult result;
  std::string bytes;  // metrics, report and predictions
};
std::map<std::uint64_t, SeedRun> g_runs;

std::string ReportBytes(const PreparedExperiment& p, const ExperimentResult& r) {
  std::ostringstream s;
  WriteMetricsTsv(s, r, true);
  s << RenderReport(r, true);
  WritePredictions(s, p.data.test.docs, r.local_predictions, p.data.store);
  WritePredictions(s, p.data.test.docs, r.global_predictions, p.data.store);
  WriteModel(s, r.global_model);
  return s.str();
}

const SeedRun& Run(std::uint64_t seed) {
  auto it = g_runs.find(seed);
  if (it != g_runs.end()) return it->second;
  auto& p = Prepared(seed);
  SeedRun run;
  run.result = RunExperiment(Benchmark(seed), p);
  run.bytes = ReportBytes(p, run.result);
  return g_runs.emplace(seed, std::move(run)).first->second;
}

// Share of grid steps on which f does not decrease as the context score
// rises with the prior fixed. Informational only.
std::string MonotoneProbe(const FNet& f) {
  std::size_t steps = 0, ok = 0;
  for (int b = 0; b <= 10; ++b) {
    const double log_prior = std::log(1e-3) * (1.0 - b / 10.0);
    for (int a = 0; a < 40; ++a) {
      const double x = -2.0 + 0.1 * a;
      ++steps;
      ok += f.Eval(x + 0.1, log_prior) >= f.Eval(x, log_prior);
    }
  }
  return std::to_string(ok) + "/" + std::to_string(steps);
}

// ---------------------------------------------------------------------------

Outcome GradientFidelity() {
  Outcome o;
  const auto t0 = Clock::now();
  GradCheckOptions opt;
  opt.epsilon = 1e-3;
  opt.tolerance = 1e-4;
  opt.max_coordinates_per_block = 200;
  GlobalSettings gs;
  gs.attention_r = 5;
  gs.layers = 3;
  gs.delta = 0.5;
  gs.gamma = 0.01;
  for (const bool global : {false, true}) {
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
      RandomDocSpec spec;
      spec.mentions = global ? 3 : 2;
      spec.candidates = 3;
      spec.words = 10;
      auto inst = MakeRandomDoc(DeriveSeed(1, i), spec);
      opt.seed = DeriveSeed(1, 1000 + i);
      const auto r = global ? CheckGlobalGradient(inst, gs, opt)
                            : CheckLocalGradient(inst, 5, gs.gamma, opt);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
      skipped += r.skipped;
    }
    o.Require(worst < 1e-4, std::string(global ? "global" : "local") +
                                " max relative error " + FormatDouble(worst) + " over " +
                                std::to_string(checked) + " coordinates, " +
                                std::to_string(skipped) + " skipped at ties");
  }
  const double secs = Seconds(t0);
  o.Require(secs < 60.0, "runtime " + Num(secs, 1) + " s (limit 60 s)");
  return o;
}

Outcome ExactInference() {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t tree_ok = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::mt19937_64 rng(DeriveSeed(2, seed));
    const std::size_t s = 2 + UniformIndex(rng, 3);
    const auto crf = MakeRandomCrf(DeriveSeed(20, seed), 2, s, 5);
    const auto r = RunLbp(crf, 2, 1.0);
    TrackMass(r);
    tree_ok += BeliefArgmax(r) == oracle::MaxMarginalArgmax(ToOracle(crf));
  }
  o.Require(tree_ok == 500, "trees (n=2, delta=1, T=2): " + std::to_string(tree_ok) +
                                "/500 match the max-marginal argmax");
  std::size_t loopy_ok = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::mt19937_64 rng(DeriveSeed(3, seed));
    const std::size_t n = 2 + UniformIndex(rng, 3), s = 2 + UniformIndex(rng, 3);
    const auto crf = MakeRandomCrf(DeriveSeed(30, seed), n, s, 5);
    const auto r = RunLbp(crf, 10, 0.5);
    TrackMass(r);
    loopy_ok += BeliefArgmax(r) == oracle::ExactMap(ToOracle(crf));
  }
  const double rate = static_cast<double>(loopy_ok) / 500.0;
  o.Require(rate >= 0.9, "loopy (n<=4, S<=4, T=10, delta=0.5): exact MAP rate " +
                             Num(100 * rate, 1) + "% (" + std::to_string(loopy_ok) + "/500)");
  const double secs = Seconds(t0);
  o.Require(secs < 120.0, "runtime " + Num(secs, 1) + " s (limit 120 s)");
  return o;
}

Outcome Truncation() {
  Outcome o;
  double sum5 = 0, sum10 = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const double values[] = {5, 10};
    const auto pts = RunSweep(Benchmark(seed), Prepared(seed), SweepParam::kLayers, values);
    sum5 += pts[0].test_accuracy;
    sum10 += pts[1].test_accuracy;
    o.Note("seed " + std::to_string(seed) + ": T=5 " + Num(100 * pts[0].test_accuracy, 2) +
           ", T=10 " + Num(100 * pts[1].test_accuracy, 2));
  }
  const double a5 = 100 * sum5 / 3, a10 = 100 * sum10 / 3;
  o.Require(a5 >= a10 - 1.0, "mean accuracy T=5 " + Num(a5, 2) + " >= T=10 " + Num(a10, 2) +
                                 " - 1");
  return o;
}

Outcome HardAttention() {
  Outcome o;
  const double values[] = {5, 10, 20, 40};  // R = K = 40 is soft attention
  double tuned_sum = 0, full_sum = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = Benchmark(seed);
    const auto pts = RunSweep(cfg, Prepared(seed), SweepParam::kAttentionR, values);
    std::size_t best = 0;
    for (std::size_t k = 1; k + 1 < pts.size(); ++k)
      if (pts[k].validation_accuracy > pts[best].validation_accuracy) best = k;
    tuned_sum += pts[best].test_accuracy;
    full_sum += pts.back().test_accuracy;
    o.Note("seed " + std::to_string(seed) + ": tuned R=" + FormatDouble(pts[best].value) + " " +
           Num(100 * pts[best].test_accuracy, 2) + ", R=K=40 " +
           Num(100 * pts.back().test_accuracy, 2));
  }
  const double tuned = 100 * tuned_sum / 5, full = 100 * full_sum / 5;
  o.Require(tuned > full, "mean accuracy tuned R<K " + Num(tuned, 2) + " > R=K " + Num(full, 2));
  return o;
}

Outcome ModelOrdering() {
  Outcome o;
  const auto t0 = Clock::now();
  double prior = 0, local = 0, global = 0, train_secs = 0;
  std::size_t global_wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& r = Run(seed).result;
    prior += r.prior.in_kb_accuracy;
    local += r.local.in_kb_accuracy;
    global += r.global.in_kb_accuracy;
    train_secs += r.seconds_local + r.seconds_global;
    global_wins += r.global.in_kb_accuracy >= r.local.in_kb_accuracy;
    o.Note("seed " + std::to_string(seed) + ": prior " + Num(100 * r.prior.in_kb_accuracy, 2) +
           ", local " + Num(100 * r.local.in_kb_accuracy, 2) + ", global " +
           Num(100 * r.global.in_kb_accuracy, 2));
  }
  const auto& r1 = Run(1).result;
  o.Note("seed 1: f monotone in the context score on " +
         MonotoneProbe(r1.local_model.params.local.f) + " (local) and " +
         MonotoneProbe(r1.global_model.params.local.f) + " (global) probe steps");
  prior *= 20;
  local *= 20;
  global *= 20;
  o.Require(prior + 10 <= local, "mean prior " + Num(prior, 2) + " + 10 <= local " + Num(local, 2));
  o.Require(local <= global + 1, "mean local " + Num(local, 2) + " <= global " + Num(global, 2) +
                                     " + 1");
  o.Require(global_wins >= 4, "global >= local on " + std::to_string(global_wins) + "/5 seeds");
  o.Require(train_secs < 900, "training time " + Num(train_secs, 1) + " s (limit 900 s); " +
                                  "wall time incl. embeddings " + Num(Seconds(t0), 1) + " s");
  return o;
}

Outcome EmbeddingQuality() {
  Outcome o;
  auto& p = Prepared(1);
  const auto& trained = p.relatedness;
  EmbeddingStore random_store = p.data.store;
  RandomEntityVectors(random_store, 99);
  const auto random = EvalRelatedness(p.data.relatedness_test, random_store);
  double ratio = 0;
  for (const auto& q : p.data.relatedness_test) {
    double pos = 0;
    for (const auto& [e, label] : q.candidates) pos += label > 0;
    ratio += pos / static_cast<double>(q.candidates.size());
  }
  ratio /= static_cast<double>(p.data.relatedness_test.size());
  o.Require(trained.map >= 0.9, "trained MAP " + Num(trained.map) + " >= 0.9 over " +
                                    std::to_string(trained.scored) + " queries");
  o.Require(std::abs(random.map - ratio) <= 0.1,
            "random MAP " + Num(random.map) + " within 0.1 of label ratio " + Num(ratio));
  double worst = 0;
  std::size_t vectors = 0;
  for (std::uint32_t e = 0; e < p.data.store.entities().size(); ++e) {
    if (!p.data.store.HasEntityVector(EntityId{e})) continue;
    worst = std::max(worst, std::abs(Norm(p.data.store.Entity(EntityId{e})) - 1.0));
    ++vectors;
  }
  o.Require(worst < 1e-6, "max | |x| - 1 | = " + FormatDouble(worst) + " over " +
                              std::to_string(vectors) + " entity vectors");
  return o;
}

Outcome SelectionContract() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::size_t agree = 0, oversize = 0, composition = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t d = 5, n = 1 + UniformIndex(rng, 40), nw = 10;
    VectorTable words;
    words.dim = d;
    std::vector<std::vector<double>> rows;
    for (std::size_t w = 0; w < nw; ++w) {
      words.names.push_back("w" + std::to_string(w));
      std::vector<double> v(d);
      for (double& x : v) x = StandardNormal(rng);
      words.data.insert(words.data.end(), v.begin(), v.end());
      rows.push_back(v);
    }
    auto store = EmbeddingStore::FromWordTable(words);
    std::vector<oracle::PoolEntry> entries;
    PriorSource src;
    for (std::size_t i = 0; i < n; ++i) {
      const EntityId e = store.AddEntity("e" + std::to_string(i));
      const bool has = Uniform01(rng) < 0.85;
      std::vector<double> v(d);
      for (double& x : v) x = StandardNormal(rng);
      if (has) store.SetEntity(e, v);
      src.Add("m", e, 1 + static_cast<double>(UniformIndex(rng, 6)));
      entries.push_back({static_cast<int>(e.value), 0.0, has,
                         has ? std::vector<double>(store.Entity(e).begin(), store.Entity(e).end())
                             : v});
    }
    const auto idx = BuildPrior(std::vector<PriorSource>{src});
    for (auto& e : entries)
      e.prior = idx.Prior("m", EntityId{static_cast<std::uint32_t>(e.entity)});
    std::vector<WordId> ctx;
    std::vector<std::vector<double>> ctx_vecs;
    for (std::size_t k = 0, nk = 1 + UniformIndex(rng, 8); k < nk; ++k) {
      const auto w = static_cast<std::uint32_t>(UniformIndex(rng, nw));
      ctx.push_back(WordId{w});
      ctx_vecs.push_back(rows[w]);
    }
    const auto got = SelectCandidates("m", ctx, idx, store);
    const auto want = oracle::SelectCandidates(entries, ctx_vecs);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = static_cast<int>(got[i].entity.value) == want[i].entity &&
             (got[i].reason == SelectionReason::kContextTop) == want[i].by_context;
    agree += same;
    oversize += got.size() > 7;
    std::size_t by_prior = 0, by_context = 0;
    for (const auto& c : got) (c.reason == SelectionReason::kContextTop ? by_context : by_prior)++;
    composition += by_context <= 3 && (got.size() < 7 || by_prior >= 4);
  }
  o.Require(agree == 1000, std::to_string(agree) + "/1000 instances agree with the oracle");
  o.Require(oversize == 0, std::to_string(oversize) + " candidate sets larger than 7");
  o.Require(composition == 1000,
            std::to_string(composition) + "/1000 sets are top-4 by prior plus <= 3 by context");
  return o;
}

Outcome NormalizationAndDeterminism() {
  Outcome o;
  o.Require(g_messages_checked > 0 && g_worst_mass_error < 1e-6,
            "max |sum - 1| = " + FormatDouble(g_worst_mass_error) + " over " +
                std::to_string(g_messages_checked) + " messages and all beliefs");
  const auto& first = Run(1).bytes;
  PreparedExperiment p = PrepareExperiment(Benchmark(1));
  const auto again = RunExperiment(Benchmark(1), p);
  const std::string second = ReportBytes(p, again);
  o.Require(first == second, "seed-1 rerun reproduces " + std::to_string(first.size()) +
                                 " bytes of metrics, report, predictions and model exactly");
  return o;
}

Outcome Throughput() {
  Outcome o;
  RandomDocSpec spec;
  spec.mentions = 20;
  spec.candidates = 7;
  spec.words = 100;
  spec.dim = 300;
  spec.hidden = 100;
  auto inst = MakeRandomDoc(9, spec);
  GlobalSettings gs;
  gs.layers = 10;
  PredictGlobal(inst.params, inst.prepared, gs);  // warm-up
  std::vector<double> times;
  for (int rep = 0; rep < 10; ++rep) {
    const auto t0 = Clock::now();
    PredictGlobal(inst.params, inst.prepared, gs);
    times.push_back(Seconds(t0));
  }
  std::sort(times.begin(), times.end());
  const double per_mention_ms = 1000 * times[times.size() / 2] / 20;
  o.Require(per_mention_ms < 10.0, "n=20, S=7, T=10, d=300: " + Num(per_mention_ms, 3) +
                                       " ms per mention (limit 10 ms)");

  const std::size_t sizes[] = {4, 7, 14};
  std::vector<CrfInstance> crfs;
  for (std::size_t s : sizes) {
    crfs.push_back(MakeRandomCrf(10 + s, 20, s, 300));
    TrackMass(RunLbp(crfs.back(), 10, 0.5));
  }
  // Interleaved repetitions, minimum time: robust to background load.
  std::vector<double> lbp(3, 1e300);
  for (int rep = 0; rep < 25; ++rep)
    for (std::size_t k = 0; k < 3; ++k) {
      const auto t0 = Clock::now();
      RunLbp(crfs[k], 10, 0.5);
      lbp[k] = std::min(lbp[k], Seconds(t0));
    }
  for (std::size_t k = 0; k < 3; ++k)
    o.Note("LBP S=" + std::to_string(sizes[k]) + ": " + Num(1000 * lbp[k], 3) + " ms");
  // Fixed per-message overhead plus a term in S: fit both a quadratic and a
  // linear term through S=4 and S=14 and see which predicts S=7.
  const double slope = std::log(lbp[2] / lbp[0]) / std::log(14.0 / 4.0);
  const double quad = lbp[0] + (lbp[2] - lbp[0]) * (49.0 - 16.0) / (196.0 - 16.0);
  const double lin = lbp[0] + (lbp[2] - lbp[0]) * (7.0 - 4.0) / (14.0 - 4.0);
  const double quad_err = std::abs(quad - lbp[1]) / lbp[1];
  const double lin_err = std::abs(lin - lbp[1]) / lbp[1];
  o.Note("raw log-log exponent S=4..14: " + Num(slope, 2));
  o.Require(quad_err < 0.1 && quad_err < lin_err,
            "a + c*S^2 predicts S=7 within " + Num(100 * quad_err, 1) + "% (a + b*S: " +
                Num(100 * lin_err, 1) + "%)");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::pair<const char*, Outcome (*)()> criteria[] = {
      {"gradient fidelity", GradientFidelity},
      {"exact-inference oracle", ExactInference},
      {"truncation study", Truncation},
      {"hard-attention study", HardAttention},
      {"model ordering", ModelOrdering},
      {"embedding quality", EmbeddingQuality},
      {"candidate-selection contract", SelectionContract},
      {"message normalization and determinism", NormalizationAndDeterminism},
      {"throughput", Throughput},
  };
  // Criterion 8 audits the LBP runs of 2 and 9, so those run first.
  const int order[] = {1, 2, 9, 7, 6, 5, 3, 4, 8};
  std::map<int, Outcome> results;
  for (int c : order) {
    if (!only.empty() && !only.count(c)) continue;
    const auto t0 = Clock::now();
    try {
      results[c] = criteria[c - 1].second();
    } catch (const std::exception& e) {
      results[c].Require(false, std::string("exception: ") + e.what());
    }
    results[c].Note("(" + Num(Seconds(t0), 1) + " s)");
    std::cerr << "criterion " << c << " done in " << Num(Seconds(t0), 1) << " s\n";
  }
  bool all = true;
  for (auto& [c, r] : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << c << " " << criteria[c - 1].first << "\n";
    for (const auto& d : r.details) std::cout << "    " << d << "\n";
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
