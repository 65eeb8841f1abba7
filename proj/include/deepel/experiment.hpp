// End-to-end experiment pipeline: data, entity embeddings, candidate
// selection, prior baseline, local and global training, evaluation and
// reports; plus parameter sweeps and SVG line plots.
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deepel/candidates.hpp"
#include "deepel/corpus.hpp"
#include "deepel/embed.hpp"
#include "deepel/global.hpp"
#include "deepel/local.hpp"
#include "deepel/model_io.hpp"
#include "deepel/synthetic.hpp"
#include "deepel/training.hpp"

namespace deepel {

struct ExperimentConfig {
  std::string data_dir;  // empty: generate a synthetic benchmark
  SyntheticSpec synthetic;
  EmbedTrainConfig embed;
  SelectionOptions selection;
  std::size_t context_k = 100;
  std::size_t hidden = 100;
  double weight_radius = 1.0;
  double prior_floor = kDefaultPriorFloor;
  LocalTrainConfig local;
  GlobalTrainConfig global;
  bool train_global = true;
  bool global_from_local = true;  // start the global model from the local one
  std::string persons_file;       // enables person coreference when set
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  /// Propagates `seed` to every random stream of the pipeline.
  void SetSeed(std::uint64_t s) {
    seed = s;
    synthetic.seed = s;
    embed.seed = s;
    local.schedule.seed = DeriveSeed(s, 11);
    global.schedule.seed = DeriveSeed(s, 12);
  }
};

/// Everything the pipeline reads, either loaded from a directory laid out
/// like `generate-synthetic` output or generated in memory.
struct ExperimentData {
  EmbeddingStore store;
  Corpus train, validation, test;
  CooccurrenceCounts counts;
  PriorIndex prior;
  std::vector<RelatednessQuery> relatedness_validation, relatedness_test;
  std::map<EntityId, double> frequency;
  std::vector<std::vector<WordId>> signatures;  // by entity; may be empty
};

namespace detail {

template <class Fn>
auto Stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(std::string("stage '") + name + "': " + e.what(), e.kind());
  }
}

inline std::string Fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::vector<std::vector<WordId>> LoadSignatures(const std::string& path,
                                                       EmbeddingStore& store) {
  std::vector<std::vector<WordId>> out;
  auto in = OpenForRead(path);
  std::string line;
  while (std::getline(in, line)) {
    auto f = SplitOn(StripCr(line), '\t');
    if (f.size() < 2) continue;
    const EntityId e = store.AddEntity(f[0]);
    if (out.size() <= e.value) out.resize(e.value + 1);
    for (std::size_t k = 2; k < f.size(); ++k)
      if (auto w = store.words().Find(f[k])) out[e.value].push_back(*w);
  }
  return out;
}

}  // namespace detail

inline ExperimentData LoadExperimentData(const ExperimentConfig& cfg) {
  ExperimentData d;
  if (cfg.data_dir.empty()) {
    SyntheticData s = GenerateSynthetic(cfg.synthetic);
    d.store = std::move(s.store);
    d.train = std::move(s.train);
    d.validation = std::move(s.validation);
    d.test = std::move(s.test);
    d.counts = std::move(s.counts);
    d.counts.set_alpha(cfg.embed.alpha);
    d.prior = std::move(s.prior);
    d.relatedness_validation = std::move(s.relatedness_validation);
    d.relatedness_test = std::move(s.relatedness_test);
    d.frequency = std::move(s.frequency);
    d.signatures = std::move(s.signatures);
    d.store.mutable_words().MarkStopWords(DefaultStopWords());
    return d;
  }
  namespace fs = std::filesystem;
  const fs::path dir(cfg.data_dir);
  auto file = [&](const char* name) { return (dir / name).string(); };
  auto exists = [&](const char* name) { return fs::exists(dir / name); };
  d.store = LoadWordVectors(file("words.txt"), VectorFormat::kText);
  d.store.mutable_words().MarkStopWords(DefaultStopWords());
  d.counts = LoadCounts(file("counts.tsv"), d.store, cfg.embed.alpha);
  PriorSource src = LoadPriorSource(file("prior_counts.tsv"), PriorSourceKind::kCount, d.store);
  d.prior = BuildPrior(std::span<const PriorSource>(&src, 1));
  d.train = LoadCorpus(file("train.jsonl"), d.store, CorpusFormat::kJsonLines, Split::kTrain);
  d.validation = LoadCorpus(file("validation.jsonl"), d.store, CorpusFormat::kJsonLines,
                            Split::kValidation);
  d.test = LoadCorpus(file("test.jsonl"), d.store, CorpusFormat::kJsonLines, Split::kTest);
  const Corpus all[] = {d.train, d.validation, d.test};
  CheckDisjointIds(all);
  if (exists("relatedness_validation.tsv"))
    d.relatedness_validation = LoadRelatednessQueries(file("relatedness_validation.tsv"), d.store);
  if (exists("relatedness_test.tsv"))
    d.relatedness_test = LoadRelatednessQueries(file("relatedness_test.tsv"), d.store);
  if (exists("frequency.tsv")) d.frequency = LoadFrequencies(file("frequency.tsv"), d.store);
  if (exists("signatures.tsv")) d.signatures = detail::LoadSignatures(file("signatures.tsv"), d.store);
  return d;
}

/// Candidate sets for every document, with optional person coreference.
inline void SelectAllCandidates(ExperimentData& d, const ExperimentConfig& cfg) {
  std::unordered_set<EntityId> persons;
  if (!cfg.persons_file.empty()) persons = LoadPersons(cfg.persons_file, d.store);
  auto is_person = [&](EntityId e) { return persons.contains(e); };
  for (auto* c : {&d.train, &d.validation, &d.test})
    for (auto& doc : c->docs) {
      SelectDocumentCandidates(doc, d.prior, d.store, cfg.context_k, cfg.selection);
      if (!persons.empty())
        CorefPersonMerge(doc, d.prior, is_person, cfg.selection.max_candidates);
    }
}

/// Random unit vectors for every entity, as an untrained reference.
inline void RandomEntityVectors(EmbeddingStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(DeriveSeed(seed, 0x72616e64));
  std::vector<double> v(store.dim());
  for (std::uint32_t i = 0; i < store.entities().size(); ++i) {
    for (double& x : v) x = StandardNormal(rng);
    store.SetEntity(EntityId{i}, v);
  }
}

struct ExperimentResult {
  CorpusStats train_stats, test_stats;
  RelatednessMetrics relatedness;
  double gold_recall = 0.0;  // test split, percent
  DisambiguationMetrics prior, local, global;
  TrainReport local_report, global_report;
  std::vector<Predictions> local_predictions, global_predictions;
  BreakdownReport breakdown;  // of the final model
  ModelFile local_model, global_model;
  double seconds_embed = 0.0, seconds_local = 0.0, seconds_global = 0.0;
};

/// Trained state shared by the experiment and the sweeps.
struct PreparedExperiment {
  ExperimentData data;
  std::vector<PreparedDoc> train, validation, test;
  RelatednessMetrics relatedness;
  double seconds_embed = 0.0;
};

inline PreparedExperiment PrepareExperiment(const ExperimentConfig& cfg,
                                            std::ostream* log = nullptr) {
  PreparedExperiment p;
  p.data = detail::Stage("data", [&] { return LoadExperimentData(cfg); });
  detail::Stage("embeddings", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    EmbedTrainConfig ec = cfg.embed;
    ec.threads = cfg.threads;
    TrainEmbeddings(p.data.counts, ec, p.data.store, p.data.relatedness_validation, log);
    p.seconds_embed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    p.relatedness = EvalRelatedness(p.data.relatedness_test, p.data.store);
    return 0;
  });
  detail::Stage("candidates", [&] {
    SelectAllCandidates(p.data, cfg);
    return 0;
  });
  detail::Stage("prepare", [&] {
    p.train = PrepareCorpus(p.data.train.docs, p.data.store, cfg.context_k, cfg.prior_floor);
    p.validation =
        PrepareCorpus(p.data.validation.docs, p.data.store, cfg.context_k, cfg.prior_floor);
    p.test = PrepareCorpus(p.data.test.docs, p.data.store, cfg.context_k, cfg.prior_floor);
    return 0;
  });
  return p;
}

inline LocalParams TrainLocalModel(const PreparedExperiment& p, const ExperimentConfig& cfg,
                                   TrainReport* report = nullptr,
                                   std::ostream* log = nullptr) {
  LocalParams lp = LocalParams::Init(p.data.store.dim(), cfg.hidden,
                                     DeriveSeed(cfg.seed, 21), cfg.weight_radius);
  LocalTrainConfig lc = cfg.local;
  lc.weight_radius = cfg.weight_radius;
  lc.schedule.log = log;
  auto r = TrainLocal(lp, p.train, p.validation, p.data.store, lc);
  if (report) *report = r;
  return lp;
}

inline GlobalParams TrainGlobalModel(const PreparedExperiment& p, const ExperimentConfig& cfg,
                                     const LocalParams* init, TrainReport* report = nullptr,
                                     std::ostream* log = nullptr) {
  GlobalParams gp = GlobalParams::Init(p.data.store.dim(), cfg.hidden,
                                       DeriveSeed(cfg.seed, 22), cfg.weight_radius);
  if (init) gp.local = *init;
  GlobalTrainConfig gc = cfg.global;
  gc.weight_radius = cfg.weight_radius;
  gc.schedule.log = log;
  auto r = TrainGlobal(gp, p.train, p.validation, p.data.store, gc);
  if (report) *report = r;
  return gp;
}

inline DisambiguationMetrics EvaluateLocal(const LocalParams& lp, const PreparedExperiment& p,
                                           std::size_t r, std::size_t threads,
                                           std::vector<Predictions>* out = nullptr) {
  auto preds = PredictAll(
      p.test, [&](const PreparedDoc& d) { return PredictLocal(lp, d, r); }, threads);
  auto m = ScorePredictions(p.data.test.docs, preds, p.data.store);
  if (out) *out = std::move(preds);
  return m;
}

inline DisambiguationMetrics EvaluateGlobal(const GlobalParams& gp, const PreparedExperiment& p,
                                            const GlobalSettings& s, std::size_t threads,
                                            std::vector<Predictions>* out = nullptr) {
  auto preds = PredictAll(
      p.test, [&](const PreparedDoc& d) { return PredictGlobal(gp, d, s); }, threads);
  auto m = ScorePredictions(p.data.test.docs, preds, p.data.store);
  if (out) *out = std::move(preds);
  return m;
}

inline DisambiguationMetrics EvaluatePrior(const PreparedExperiment& p) {
  std::vector<Predictions> preds;
  for (const auto& d : p.data.test.docs) preds.push_back(PredictPrior(d));
  return ScorePredictions(p.data.test.docs, preds, p.data.store);
}

inline ExperimentResult RunExperiment(const ExperimentConfig& cfg, PreparedExperiment& p,
                                      std::ostream* log = nullptr) {
  ExperimentResult r;
  r.train_stats = Stats(p.data.train.docs);
  r.test_stats = Stats(p.data.test.docs);
  r.relatedness = p.relatedness;
  r.seconds_embed = p.seconds_embed;
  r.gold_recall = GoldRecall(p.data.test.docs);
  r.prior = EvaluatePrior(p);

  auto now = [] { return std::chrono::steady_clock::now(); };
  LocalParams lp = detail::Stage("train-local", [&] {
    const auto t0 = now();
    auto m = TrainLocalModel(p, cfg, &r.local_report, log);
    r.seconds_local = std::chrono::duration<double>(now() - t0).count();
    return m;
  });
  r.local = detail::Stage("evaluate-local", [&] {
    return EvaluateLocal(lp, p, cfg.local.attention_r, cfg.threads, &r.local_predictions);
  });
  r.local_model = {ModelKind::kLocal, {lp, std::vector<double>(lp.dim(), 1.0)},
                   cfg.context_k, cfg.local.attention_r, cfg.local.gamma};
  const std::vector<Predictions>* final_preds = &r.local_predictions;

  if (cfg.train_global) {
    GlobalParams gp = detail::Stage("train-global", [&] {
      const auto t0 = now();
      auto m = TrainGlobalModel(p, cfg, cfg.global_from_local ? &lp : nullptr,
                                &r.global_report, log);
      r.seconds_global = std::chrono::duration<double>(now() - t0).count();
      return m;
    });
    r.global = detail::Stage("evaluate-global", [&] {
      return EvaluateGlobal(gp, p, cfg.global.settings, cfg.threads, &r.global_predictions);
    });
    const auto& s = cfg.global.settings;
    r.global_model = {ModelKind::kGlobal, gp, cfg.context_k, s.attention_r, s.gamma,
                      s.delta, s.layers};
    final_preds = &r.global_predictions;
  }
  r.breakdown = Breakdown(p.data.test.docs, *final_preds, p.data.frequency);
  return r;
}

// ---------------------------------------------------------------------------
// Reports.

/// `key \t value` rows; contains no timings, so identical seeds give
/// identical bytes.
inline void WriteMetricsTsv(std::ostream& out, const ExperimentResult& r, bool with_global) {
  auto row = [&](const std::string& k, double v) { out << k << '\t' << FormatDouble(v) << '\n'; };
  auto count = [&](const std::string& k, std::size_t v) { out << k << '\t' << v << '\n'; };
  count("train_docs", r.train_stats.docs);
  count("test_docs", r.test_stats.docs);
  count("test_mentions", r.test_stats.mentions);
  row("test_mentions_per_doc", r.test_stats.mentions_per_doc);
  row("relatedness_ndcg1", r.relatedness.ndcg1);
  row("relatedness_ndcg5", r.relatedness.ndcg5);
  row("relatedness_ndcg10", r.relatedness.ndcg10);
  row("relatedness_map", r.relatedness.map);
  row("gold_recall", r.gold_recall);
  auto model = [&](const std::string& name, const DisambiguationMetrics& m) {
    row(name + "_accuracy", m.in_kb_accuracy);
    row(name + "_precision", m.precision);
    row(name + "_recall", m.recall);
    row(name + "_f1", m.f1);
  };
  model("prior", r.prior);
  model("local", r.local);
  count("local_best_epoch", r.local_report.best_epoch);
  if (with_global) {
    model("global", r.global);
    count("global_best_epoch", r.global_report.best_epoch);
  }
}

inline std::string RenderTable(const std::vector<std::string>& header,
                               const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], r[c].size());
  std::ostringstream s;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      s << (c == 0 ? "" : "  ") << cell << std::string(width[c] - cell.size(), ' ');
    }
    s << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  s << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return s.str();
}

inline std::string RenderReport(const ExperimentResult& r, bool with_global) {
  using detail::Fixed;
  std::ostringstream s;
  s << "documents (test): " << r.test_stats.docs << ", mentions: " << r.test_stats.mentions
    << ", mentions/doc: " << Fixed(r.test_stats.mentions_per_doc, 2) << "\n";
  s << "gold recall: " << Fixed(r.gold_recall, 2) << "%\n\n";
  s << RenderTable({"relatedness", "NDCG@1", "NDCG@5", "NDCG@10", "MAP"},
                   {{"entity vectors", Fixed(r.relatedness.ndcg1, 3), Fixed(r.relatedness.ndcg5, 3),
                     Fixed(r.relatedness.ndcg10, 3), Fixed(r.relatedness.map, 3)}});
  s << "\n";
  std::vector<std::vector<std::string>> rows;
  auto add = [&](const char* name, const DisambiguationMetrics& m) {
    rows.push_back({name, Fixed(100 * m.in_kb_accuracy, 2), Fixed(100 * m.precision, 2),
                    Fixed(100 * m.recall, 2), Fixed(100 * m.f1, 2)});
  };
  add("prior", r.prior);
  add("local", r.local);
  if (with_global) add("global", r.global);
  s << RenderTable({"model", "accuracy", "precision", "recall", "F1"}, rows);
  s << "\n";
  std::vector<std::vector<std::string>> b;
  for (const auto& bk : r.breakdown.by_frequency)
    b.push_back({"frequency " + bk.label, std::to_string(bk.count), Fixed(100 * bk.accuracy(), 2)});
  for (const auto& bk : r.breakdown.by_prior)
    b.push_back({"prior " + bk.label, std::to_string(bk.count), Fixed(100 * bk.accuracy(), 2)});
  s << RenderTable({"bucket", "mentions", "accuracy"}, b);
  return s.str();
}

inline void WriteBreakdownTsv(std::ostream& out, const BreakdownReport& r) {
  out << "dimension\tbucket\tmentions\tcorrect\taccuracy\n";
  for (const auto& b : r.by_frequency)
    out << "frequency\t" << b.label << '\t' << b.count << '\t' << b.correct << '\t'
        << FormatDouble(b.accuracy()) << '\n';
  for (const auto& b : r.by_prior)
    out << "prior\t" << b.label << '\t' << b.count << '\t' << b.correct << '\t'
        << FormatDouble(b.accuracy()) << '\n';
}

/// Per mention: the context words with nonzero attention, by descending
/// weight.
inline void WriteAttentionDump(std::ostream& out, const LocalParams& lp,
                               std::span<const PreparedDoc> docs,
                               std::span<const Predictions> preds, std::size_t r,
                               const EmbeddingStore& store) {
  out << "doc\tmention\tsurface\tgold\tpredicted\trank\tword\tweight\n";
  for (std::size_t d = 0; d < docs.size(); ++d)
    for (const auto& pm : docs[d].mentions) {
      const Mention& m = docs[d].doc->mentions[pm.mention];
      const auto words = AttendedWords(lp, pm, r);
      const auto& pred = preds[d][pm.mention];
      for (std::size_t k = 0; k < words.size(); ++k)
        out << docs[d].doc->id << '\t' << pm.mention << '\t' << m.surface << '\t'
            << (m.gold ? store.entities().Name(*m.gold) : "") << '\t'
            << (pred ? store.entities().Name(*pred) : "") << '\t' << k + 1 << '\t'
            << store.words().Name(words[k].word) << '\t' << FormatDouble(words[k].weight)
            << '\n';
    }
}

/// Writes metrics.tsv, report.txt, breakdown.tsv, attention.tsv, the
/// prediction files and the trained models into `dir`.
inline void WriteExperimentOutputs(const std::string& dir, const ExperimentConfig& cfg,
                                   const PreparedExperiment& p, const ExperimentResult& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  {
    auto out = OpenForWrite(path("metrics.tsv"));
    WriteMetricsTsv(out, r, cfg.train_global);
  }
  {
    auto out = OpenForWrite(path("report.txt"));
    out << RenderReport(r, cfg.train_global);
  }
  {
    auto out = OpenForWrite(path("breakdown.tsv"));
    WriteBreakdownTsv(out, r.breakdown);
  }
  {
    auto out = OpenForWrite(path("attention.tsv"));
    WriteAttentionDump(out, r.local_model.params.local, p.test, r.local_predictions,
                       cfg.local.attention_r, p.data.store);
  }
  {
    auto out = OpenForWrite(path("predictions_local.tsv"));
    WritePredictions(out, p.data.test.docs, r.local_predictions, p.data.store);
  }
  SaveModel(path("local.model"), r.local_model);
  if (cfg.train_global) {
    auto out = OpenForWrite(path("predictions_global.tsv"));
    WritePredictions(out, p.data.test.docs, r.global_predictions, p.data.store);
    SaveModel(path("global.model"), r.global_model);
  }
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class SweepParam { kLayers, kDelta, kAttentionR, kGlobalR, kContextK };

inline SweepParam ParseSweepParam(std::string_view s) {
  if (s == "T" || s == "layers") return SweepParam::kLayers;
  if (s == "delta") return SweepParam::kDelta;
  if (s == "R" || s == "local-r") return SweepParam::kAttentionR;
  if (s == "global-r") return SweepParam::kGlobalR;
  if (s == "K") return SweepParam::kContextK;
  throw Error("unknown sweep parameter '" + std::string(s) +
              "' (expected T, delta, R, global-r or K)");
}

inline const char* SweepParamName(SweepParam p) {
  switch (p) {
    case SweepParam::kLayers: return "T";
    case SweepParam::kDelta: return "delta";
    case SweepParam::kAttentionR: return "R";
    case SweepParam::kGlobalR: return "global-r";
    case SweepParam::kContextK: return "K";
  }
  return "?";
}

struct SweepPoint {
  double value = 0.0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Retrains the affected model once per value. R and K sweeps train local
/// models; T, delta and global-R sweeps train global models, each started
/// from one shared local model when `global_from_local` is set.
inline std::vector<SweepPoint> RunSweep(const ExperimentConfig& base, PreparedExperiment& p,
                                        SweepParam param, std::span<const double> values,
                                        std::ostream* log = nullptr) {
  std::vector<SweepPoint> out;
  const bool local_sweep = param == SweepParam::kAttentionR || param == SweepParam::kContextK;
  std::optional<LocalParams> init;
  if (!local_sweep && base.global_from_local)
    init = detail::Stage("train-local", [&] { return TrainLocalModel(p, base, nullptr, log); });
  for (double v : values) {
    if (!(v > 0.0)) throw Error("sweep values must be positive");
    ExperimentConfig cfg = base;
    const auto iv = static_cast<std::size_t>(std::llround(v));
    switch (param) {
      case SweepParam::kLayers: cfg.global.settings.layers = iv; break;
      case SweepParam::kDelta: cfg.global.settings.delta = v; break;
      case SweepParam::kAttentionR: cfg.local.attention_r = iv; break;
      case SweepParam::kGlobalR: cfg.global.settings.attention_r = iv; break;
      case SweepParam::kContextK: cfg.context_k = iv; break;
    }
    SweepPoint pt{v, 0.0, 0.0};
    if (local_sweep) {
      if (param == SweepParam::kContextK) {
        p.train = PrepareCorpus(p.data.train.docs, p.data.store, iv, cfg.prior_floor);
        p.validation = PrepareCorpus(p.data.validation.docs, p.data.store, iv, cfg.prior_floor);
        p.test = PrepareCorpus(p.data.test.docs, p.data.store, iv, cfg.prior_floor);
      }
      TrainReport rep;
      LocalParams lp = detail::Stage("train-local", [&] { return TrainLocalModel(p, cfg, &rep, log); });
      pt.validation_accuracy = rep.best_accuracy;
      pt.test_accuracy = EvaluateLocal(lp, p, cfg.local.attention_r, cfg.threads).in_kb_accuracy;
    } else {
      TrainReport rep;
      GlobalParams gp = detail::Stage("train-global", [&] {
        return TrainGlobalModel(p, cfg, init ? &*init : nullptr, &rep, log);
      });
      pt.validation_accuracy = rep.best_accuracy;
      pt.test_accuracy =
          EvaluateGlobal(gp, p, cfg.global.settings, cfg.threads).in_kb_accuracy;
    }
    if (log)
      *log << SweepParamName(param) << " = " << FormatDouble(v) << ": validation "
           << FormatDouble(pt.validation_accuracy) << ", test "
           << FormatDouble(pt.test_accuracy) << "\n";
    out.push_back(pt);
  }
  if (param == SweepParam::kContextK) {
    p.train = PrepareCorpus(p.data.train.docs, p.data.store, base.context_k, base.prior_floor);
    p.validation =
        PrepareCorpus(p.data.validation.docs, p.data.store, base.context_k, base.prior_floor);
    p.test = PrepareCorpus(p.data.test.docs, p.data.store, base.context_k, base.prior_floor);
  }
  return out;
}

inline void WriteSweepTsv(std::ostream& out, SweepParam param, std::span<const SweepPoint> pts) {
  out << SweepParamName(param) << "\tvalidation_accuracy\ttest_accuracy\n";
  for (const auto& p : pts)
    out << FormatDouble(p.value) << '\t' << FormatDouble(p.validation_accuracy) << '\t'
        << FormatDouble(p.test_accuracy) << '\n';
}

inline std::vector<SweepPoint> ReadSweepTsv(std::istream& in, std::string* param_name = nullptr) {
  std::vector<SweepPoint> pts;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto f = SplitOn(StripCr(line), '\t');
    if (row == 1) {
      if (param_name && !f.empty()) *param_name = std::string(f[0]);
      continue;
    }
    if (f.size() == 1 && f[0].empty()) continue;
    auto v = f.size() == 3 ? ParseDouble(f[0]) : std::nullopt;
    auto a = f.size() == 3 ? ParseDouble(f[1]) : std::nullopt;
    auto b = f.size() == 3 ? ParseDouble(f[2]) : std::nullopt;
    if (!v || !a || !b) throw Error("sweep table row " + std::to_string(row) + " is malformed");
    pts.push_back({*v, *a, *b});
  }
  return pts;
}

inline std::string RenderSweepTable(SweepParam param, std::span<const SweepPoint> pts) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : pts)
    rows.push_back({FormatDouble(p.value), detail::Fixed(100 * p.validation_accuracy, 2),
                    detail::Fixed(100 * p.test_accuracy, 2)});
  return RenderTable({SweepParamName(param), "validation", "test"}, rows);
}

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// A standalone SVG line chart.
inline std::string RenderSvgPlot(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel, std::span<const PlotSeries> series) {
  const double w = 480, h = 320, left = 60, right = 20, top = 40, bottom = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x); x1 = std::max(x1, x);
      y0 = std::min(y0, y); y1 = std::max(y1, y);
    }
  if (x0 > x1) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
  if (x1 == x0) { x0 -= 1; x1 += 1; }
  if (y1 == y0) { y0 -= 1; y1 += 1; }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };
  using detail::Fixed;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\""
    << h - bottom << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
    << h - bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << Fixed(px(xv), 1) << "\" y=\"" << h - bottom + 16
      << "\" text-anchor=\"middle\">" << Fixed(xv, 2) << "</text>\n"
      << "<text x=\"" << left - 6 << "\" y=\"" << Fixed(py(yv) + 4, 1)
      << "\" text-anchor=\"end\">" << Fixed(yv, 2) << "</text>\n";
  }
  s << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10
    << "\" text-anchor=\"middle\">" << xlabel << "</text>\n"
    << "<text x=\"15\" y=\"" << (top + h - bottom) / 2 << "\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 15 " << (top + h - bottom) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % 4];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : series[k].points) s << Fixed(px(x), 1) << "," << Fixed(py(y), 1) << " ";
    s << "\"/>\n";
    for (auto [x, y] : series[k].points)
      s << "<circle cx=\"" << Fixed(px(x), 1) << "\" cy=\"" << Fixed(py(y), 1)
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    s << "<text x=\"" << w - right - 100 << "\" y=\"" << top + 14 * k + 10 << "\" fill=\""
      << color << "\">" << series[k].name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace deepel
