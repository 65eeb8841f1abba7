// deepel: command-line front end.
//
// Exit codes: 0 success, 1 invalid input or failed check, 2 I/O error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "deepel/deepel.hpp"

namespace fs = std::filesystem;
using namespace deepel;

namespace {

constexpr const char* kDataDirEnv = "DEEPEL_DATA_DIR";

struct Common {
  std::string data_dir;
  std::string config;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool quiet = false;

  std::string Path(const std::string& given, const char* name) const {
    if (!given.empty()) return given;
    return (fs::path(data_dir) / name).string();
  }
  std::ostream* log() const { return quiet ? nullptr : &std::cerr; }
};

// Word vectors plus, when the file exists, trained entity vectors.
EmbeddingStore LoadStore(const std::string& words, const std::string& entities,
                         const std::string& stop_words) {
  EmbeddingStore store = LoadWordVectors(words, GuessVectorFormat(words));
  if (!entities.empty() && fs::exists(entities))
    store.LoadEntities(LoadVectorTable(entities, GuessVectorFormat(entities)));
  store.mutable_words().MarkStopWords(stop_words.empty() ? DefaultStopWords()
                                                         : LoadStopWords(stop_words));
  return store;
}

std::size_t DropUnembedded(std::vector<Document>& docs, const EmbeddingStore& store) {
  std::size_t dropped = 0;
  for (auto& d : docs)
    for (auto& m : d.mentions) {
      const auto before = m.candidates.size();
      std::erase_if(m.candidates,
                    [&](const Candidate& c) { return !store.HasEntityVector(c.entity); });
      dropped += before - m.candidates.size();
    }
  return dropped;
}

struct SelectionFlags {
  std::string prior;  // when set, candidates are (re)selected
  std::string persons;
  SelectionOptions opt;
};

void AddSelectionOptions(CLI::App* s, SelectionFlags& f) {
  s->add_option("--s", f.opt.max_candidates, "Candidates per mention")->capture_default_str();
  s->add_option("--pre-cut", f.opt.pre_cut, "Entities kept by prior before selection")
      ->capture_default_str();
  s->add_option("--prior-top", f.opt.prior_top, "Candidates taken by prior")
      ->capture_default_str();
  s->add_option("--context-top", f.opt.context_top, "Candidates taken by context")
      ->capture_default_str();
  s->add_option("--persons", f.persons, "Person entity list enabling coreference");
}

// Loads a corpus and makes sure every mention's candidates carry vectors.
Corpus LoadCandidateCorpus(const std::string& path, EmbeddingStore& store,
                           const SelectionFlags& sel, std::size_t k, std::ostream* log,
                           Split split, const std::string& format = "jsonl") {
  Corpus c = LoadCorpus(path, store, ParseCorpusFormat(format), split);
  if (!sel.prior.empty()) {
    const PriorIndex prior = LoadPriorIndex(sel.prior, store);
    std::unordered_set<EntityId> persons;
    if (!sel.persons.empty()) persons = LoadPersons(sel.persons, store);
    for (auto& d : c.docs) {
      SelectDocumentCandidates(d, prior, store, k, sel.opt);
      if (!persons.empty())
        CorefPersonMerge(d, prior, [&](EntityId e) { return persons.contains(e); },
                         sel.opt.max_candidates);
    }
  }
  const auto dropped = DropUnembedded(c.docs, store);
  if (dropped && log)
    *log << "warning: " << path << ": dropped " << dropped
         << " candidates without entity vectors\n";
  return c;
}

struct ModelFlags {
  std::size_t k = 100;
  std::size_t hidden = 100;
  double radius = 1.0;
  double gamma = 0.01;
  double lr = 0.0;  // 0: model default
  std::size_t epochs = 100;
  std::size_t validate_every = 5;
  std::size_t patience = 500;
};

void AddModelOptions(CLI::App* s, ModelFlags& f) {
  s->add_option("--k", f.k, "Context window size K")->capture_default_str();
  s->add_option("--hidden", f.hidden, "Hidden units of the combination network")
      ->capture_default_str();
  s->add_option("--radius", f.radius, "Frobenius radius per weight matrix")
      ->capture_default_str();
  s->add_option("--gamma", f.gamma, "Ranking margin")->capture_default_str();
  s->add_option("--lr", f.lr, "Learning rate (default: 1e-3 local, 1e-4 global)");
  s->add_option("--epochs", f.epochs, "Maximum epochs")->capture_default_str();
  s->add_option("--validate-every", f.validate_every, "Epochs between validations")
      ->capture_default_str();
  s->add_option("--patience", f.patience, "Epochs without improvement before stopping")
      ->capture_default_str();
}

TrainSchedule MakeSchedule(const ModelFlags& f, std::uint64_t seed, std::ostream* log) {
  TrainSchedule s;
  s.max_epochs = f.epochs;
  s.validate_every = f.validate_every;
  s.patience = f.patience;
  s.seed = seed;
  s.log = log;
  return s;
}

void PrintReport(const TrainReport& r) {
  std::cout << "epochs run: " << r.epochs_run << "\n"
            << "best validation accuracy: " << FormatDouble(r.best_accuracy) << " (epoch "
            << r.best_epoch << ")\n";
}

std::string MetricsTable(const std::vector<std::pair<std::string, DisambiguationMetrics>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, m] : rows)
    cells.push_back({name, std::to_string(m.gold), std::to_string(m.predicted),
                     detail::Fixed(100 * m.in_kb_accuracy, 2), detail::Fixed(100 * m.precision, 2),
                     detail::Fixed(100 * m.recall, 2), detail::Fixed(100 * m.f1, 2)});
  return RenderTable({"model", "gold", "predicted", "accuracy", "precision", "recall", "F1"},
                     cells);
}

void WriteMetricRows(std::ostream& out, const DisambiguationMetrics& m) {
  out << "gold\t" << m.gold << "\nin_kb_gold\t" << m.in_kb_gold << "\npredicted\t"
      << m.predicted << "\ncorrect\t" << m.correct << "\nin_kb_accuracy\t"
      << FormatDouble(m.in_kb_accuracy) << "\nprecision\t" << FormatDouble(m.precision)
      << "\nrecall\t" << FormatDouble(m.recall) << "\nf1\t" << FormatDouble(m.f1) << "\n";
}

std::vector<double> ParseValues(const std::string& s) {
  std::vector<double> out;
  for (auto part : SplitOn(s, ',')) {
    auto v = ParseDouble(part);
    if (!v) throw Error("bad number '" + std::string(part) + "' in value list");
    out.push_back(*v);
  }
  if (out.empty()) throw Error("empty value list");
  return out;
}

// Experiment-level flags shared by `sweep` and `run-experiment`.
struct ExperimentFlags {
  ExperimentConfig cfg;
  bool synthetic = false;
  bool local_only = false;
  std::size_t local_epochs = 30;
  std::size_t global_epochs = 30;
};

void AddExperimentOptions(CLI::App* s, ExperimentFlags& f) {
  auto& c = f.cfg;
  c.context_k = 40;
  c.local.attention_r = 10;
  s->add_flag("--synthetic", f.synthetic, "Generate a synthetic benchmark in memory");
  s->add_flag("--local-only", f.local_only, "Skip the global model");
  s->add_option("--k", c.context_k, "Context window size K")->capture_default_str();
  s->add_option("--r", c.local.attention_r, "Local attention R")->capture_default_str();
  s->add_option("--global-r", c.global.settings.attention_r, "Attention R of the global model")
      ->capture_default_str();
  s->add_option("--t", c.global.settings.layers, "LBP iterations T")->capture_default_str();
  s->add_option("--delta", c.global.settings.delta, "Message damping")->capture_default_str();
  s->add_option("--s", c.selection.max_candidates, "Candidates per mention")
      ->capture_default_str();
  s->add_option("--prior-top", c.selection.prior_top, "Candidates taken by prior")
      ->capture_default_str();
  s->add_option("--context-top", c.selection.context_top, "Candidates taken by context")
      ->capture_default_str();
  s->add_option("--hidden", c.hidden, "Hidden units of the combination network")
      ->capture_default_str();
  s->add_option("--local-lr", c.local.learning_rate, "Local learning rate")
      ->capture_default_str();
  s->add_option("--global-lr", c.global.learning_rate, "Global learning rate")
      ->capture_default_str();
  s->add_option("--local-epochs", f.local_epochs, "Maximum local epochs")->capture_default_str();
  s->add_option("--global-epochs", f.global_epochs, "Maximum global epochs")
      ->capture_default_str();
  s->add_option("--persons", c.persons_file, "Person entity list enabling coreference");
  s->add_option("--embed-iterations", c.embed.hyperlink_iterations,
                "Upper bound on hyperlink-phase embedding iterations")
      ->capture_default_str();
  auto& sp = c.synthetic;
  s->add_option("--kb-size", sp.kb_size, "Synthetic: entities")->capture_default_str();
  s->add_option("--docs", sp.num_docs, "Synthetic: documents")->capture_default_str();
  s->add_option("--mentions-per-doc", sp.mentions_per_doc, "Synthetic: mentions per document")
      ->capture_default_str();
  s->add_option("--ambiguity", sp.ambiguity, "Synthetic: candidates per surface form")
      ->capture_default_str();
  s->add_option("--coherence", sp.coherence, "Synthetic: topical coherence")
      ->capture_default_str();
  s->add_option("--noise-rate", sp.noise_rate, "Synthetic: noise word rate")
      ->capture_default_str();
}

ExperimentConfig Finish(ExperimentFlags& f, const Common& g) {
  ExperimentConfig c = f.cfg;
  c.SetSeed(g.seed);
  c.threads = g.threads;
  c.data_dir = f.synthetic ? "" : g.data_dir;
  c.train_global = !f.local_only;
  c.local.schedule.max_epochs = f.local_epochs;
  c.global.schedule.max_epochs = f.global_epochs;
  return c;
}

// ---------------------------------------------------------------------------
// Config files: a flat `key = value` file; every key names a long flag.
// Values are injected ahead of the command line so explicit flags win.

std::vector<std::string> ConfigArgs(const std::string& path, const CLI::App& app,
                                    const CLI::App* sub) {
  auto in = OpenForRead(path);
  std::vector<std::string> out;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;
    const std::string flag = "--" + item.name;
    bool known = app.get_option_no_throw(flag) != nullptr;
    if (sub) known = known || sub->get_option_no_throw(flag) != nullptr;
    if (!known) {
      bool anywhere = false;
      for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; }))
        anywhere = anywhere || s->get_option_no_throw(flag) != nullptr;
      if (!anywhere) throw Error(path + ": unknown key '" + item.name + "'");
      continue;  // belongs to another subcommand
    }
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i)
      value += (i ? "," : "") + item.inputs[i];
    out.push_back(flag + "=" + value);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep joint entity disambiguation: embeddings, local attention and "
               "global LBP models"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();

  Common g;
  if (const char* env = std::getenv(kDataDirEnv)) g.data_dir = env;
  if (g.data_dir.empty()) g.data_dir = ".";
  app.add_option("--data-dir", g.data_dir,
                 std::string("Default location of inputs and outputs (env ") + kDataDirEnv + ")")
      ->capture_default_str();
  app.add_option("--config", g.config, "Flat key = value file mirroring the flags");
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads; 1 is deterministic")
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "No progress output");

  std::string stop_words;
  app.add_option("--stop-words", stop_words, "Stop-word list (one per line)");

  // generate-synthetic ------------------------------------------------------
  SyntheticSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic benchmark");
  gen->add_option("--out", gen_out, "Output directory (default: data dir)");
  gen->add_option("--kb-size", spec.kb_size, "Entities")->capture_default_str();
  gen->add_option("--docs", spec.num_docs, "Documents")->capture_default_str();
  gen->add_option("--mentions-per-doc", spec.mentions_per_doc, "Mentions per document")
      ->capture_default_str();
  gen->add_option("--ambiguity", spec.ambiguity, "Candidates per surface form")
      ->capture_default_str();
  gen->add_option("--coherence", spec.coherence, "Probability a document keeps to one topic")
      ->capture_default_str();
  gen->add_option("--noise-rate", spec.noise_rate, "Mean fraction of noise context words")
      ->capture_default_str();
  gen->add_option("--topics", spec.topics, "Topics")->capture_default_str();
  gen->add_option("--dim", spec.dim, "Vector dimension")->capture_default_str();
  gen->add_option("--context", spec.context_k, "Tokens around each mention")
      ->capture_default_str();
  gen->add_option("--vocab", spec.vocab_size, "Vocabulary size")->capture_default_str();

  // train-embeddings --------------------------------------------------------
  EmbedTrainConfig ec;
  std::string emb_counts, emb_words, emb_out, emb_validation;
  auto* emb = app.add_subcommand("train-embeddings", "Train entity vectors from co-occurrence counts");
  emb->add_option("--counts", emb_counts, "entity/word/count file (default: counts.tsv)");
  emb->add_option("--word-vectors", emb_words, "Word vectors (default: words.txt)");
  emb->add_option("--out", emb_out, "Entity vectors (default: entities.txt)");
  emb->add_option("--validation", emb_validation,
                  "Relatedness queries for early stopping (default: relatedness_validation.tsv)");
  emb->add_option("--alpha", ec.alpha, "Negative sampling exponent")->capture_default_str();
  emb->add_option("--gamma", ec.gamma, "Margin")->capture_default_str();
  emb->add_option("--lr", ec.learning_rate, "Adagrad learning rate")->capture_default_str();
  emb->add_option("--positives", ec.positives, "Positive words per iteration")
      ->capture_default_str();
  emb->add_option("--negatives", ec.negatives, "Negative words per positive")
      ->capture_default_str();
  emb->add_option("--description-iterations", ec.description_iterations,
                  "Iterations on description counts")
      ->capture_default_str();
  emb->add_option("--hyperlink-iterations", ec.hyperlink_iterations,
                  "Upper bound on iterations on hyperlink counts")
      ->capture_default_str();
  emb->add_option("--eval-every", ec.eval_every, "Iterations between validations")
      ->capture_default_str();
  emb->add_option("--patience", ec.patience, "Non-improving validations before stopping")
      ->capture_default_str();

  // eval-relatedness --------------------------------------------------------
  std::string rel_queries, rel_entities;
  bool rel_random = false;
  auto* rel = app.add_subcommand("eval-relatedness", "NDCG and MAP on relatedness queries");
  rel->add_option("--queries", rel_queries, "Queries (default: relatedness_test.tsv)");
  rel->add_option("--entities", rel_entities, "Entity vectors (default: entities.txt)");
  rel->add_flag("--random", rel_random, "Score random unit vectors instead");

  // inspect-neighbors -------------------------------------------------------
  std::string nb_entity, nb_words, nb_entities, nb_counts;
  std::size_t nb_k = 10;
  std::uint64_t nb_min_freq = 0;
  auto* nb = app.add_subcommand("inspect-neighbors", "Nearest words to an entity vector");
  nb->add_option("--entity", nb_entity, "Entity name")->required();
  nb->add_option("--k", nb_k, "Neighbors to list")->capture_default_str();
  nb->add_option("--min-freq", nb_min_freq, "Minimum word frequency")->capture_default_str();
  nb->add_option("--word-vectors", nb_words, "Word vectors (default: words.txt)");
  nb->add_option("--entities", nb_entities, "Entity vectors (default: entities.txt)");
  nb->add_option("--counts", nb_counts, "Counts giving word frequencies (default: counts.tsv)");

  // build-prior -------------------------------------------------------------
  std::vector<std::string> bp_sources;
  std::string bp_out;
  auto* bp = app.add_subcommand("build-prior", "Merge mention-entity indexes into p(e|m)");
  bp->add_option("--source", bp_sources,
                 "path[:count|uniform[:weight]], repeatable (default: prior_counts.tsv)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  bp->add_option("--out", bp_out, "Merged prior (default: prior.tsv)");

  // select-candidates -------------------------------------------------------
  SelectionFlags sc;
  std::string sc_corpus, sc_out, sc_words, sc_entities, sc_format = "jsonl";
  std::size_t sc_k = 100;
  auto* sel = app.add_subcommand("select-candidates", "Attach candidate sets to a corpus");
  sel->add_option("--corpus", sc_corpus, "Input corpus")->required();
  sel->add_option("--format", sc_format, "jsonl or conll")->capture_default_str();
  sel->add_option("--out", sc_out, "Output corpus (JSON lines)")->required();
  sel->add_option("--prior", sc.prior, "Merged prior (default: prior.tsv)");
  sel->add_option("--word-vectors", sc_words, "Word vectors (default: words.txt)");
  sel->add_option("--entities", sc_entities, "Entity vectors (default: entities.txt)");
  sel->add_option("--k", sc_k, "Context window for context-based selection")
      ->capture_default_str();
  AddSelectionOptions(sel, sc);

  // train-local / train-global ---------------------------------------------
  struct TrainFlags {
    std::string train, validation, words, entities, out, init;
    SelectionFlags sel;
    ModelFlags model;
    std::size_t r = 50;
    GlobalSettings settings;
    double lr_after = 1e-5;
  };
  TrainFlags tl, tg;
  auto add_train = [](CLI::App* s, TrainFlags& f) {
    s->add_option("--train", f.train, "Training corpus (default: train.jsonl)");
    s->add_option("--validation", f.validation, "Validation corpus (default: validation.jsonl)");
    s->add_option("--word-vectors", f.words, "Word vectors (default: words.txt)");
    s->add_option("--entities", f.entities, "Entity vectors (default: entities.txt)");
    s->add_option("--prior", f.sel.prior, "Reselect candidates with this prior");
    AddSelectionOptions(s, f.sel);
    AddModelOptions(s, f.model);
  };
  auto* tlc = app.add_subcommand("train-local", "Train the local attention model");
  add_train(tlc, tl);
  tlc->add_option("--r", tl.r, "Attention R")->capture_default_str();
  tlc->add_option("--out", tl.out, "Model file (default: local.model)");

  auto* tgc = app.add_subcommand("train-global", "Train the global model end to end");
  add_train(tgc, tg);
  tgc->add_option("--r", tg.settings.attention_r, "Attention R")->capture_default_str();
  tgc->add_option("--t", tg.settings.layers, "LBP iterations T")->capture_default_str();
  tgc->add_option("--delta", tg.settings.delta, "Message damping")->capture_default_str();
  tgc->add_option("--lr-after", tg.lr_after, "Learning rate once validation passes 90%")
      ->capture_default_str();
  tgc->add_option("--init-local", tg.init, "Start from a trained local model");
  tgc->add_option("--out", tg.out, "Model file (default: global.model)");

  // predict -----------------------------------------------------------------
  std::string pr_model = "global", pr_model_file, pr_corpus, pr_out, pr_attention, pr_words,
              pr_entities, pr_format = "jsonl";
  SelectionFlags pr_sel;
  auto* pr = app.add_subcommand("predict", "Disambiguate a corpus");
  pr->add_option("--model", pr_model, "local, global or prior")->capture_default_str();
  pr->add_option("--model-file", pr_model_file, "Model (default: <model>.model)");
  pr->add_option("--corpus", pr_corpus, "Corpus (default: test.jsonl)");
  pr->add_option("--format", pr_format, "jsonl or conll")->capture_default_str();
  pr->add_option("--out", pr_out, "Predictions (default: predictions.tsv)");
  pr->add_option("--attention", pr_attention, "Also dump attended words per mention");
  pr->add_option("--word-vectors", pr_words, "Word vectors (default: words.txt)");
  pr->add_option("--entities", pr_entities, "Entity vectors (default: entities.txt)");
  pr->add_option("--prior", pr_sel.prior, "Reselect candidates with this prior");
  AddSelectionOptions(pr, pr_sel);

  // evaluate / breakdown ----------------------------------------------------
  std::string ev_corpus, ev_preds, ev_out, ev_entities, ev_freq;
  auto* ev = app.add_subcommand("evaluate", "Accuracy, precision, recall and F1");
  auto* bd = app.add_subcommand("breakdown", "Accuracy by gold frequency and prior bucket");
  for (auto* s : {ev, bd}) {
    s->add_option("--corpus", ev_corpus, "Gold corpus (default: test.jsonl)");
    s->add_option("--predictions", ev_preds, "Predictions (default: predictions.tsv)");
    s->add_option("--entities", ev_entities, "Entity vectors defining the KB (default: entities.txt)");
    s->add_option("--out", ev_out, "Also write a TSV report");
  }
  bd->add_option("--frequency", ev_freq, "entity/frequency file (default: frequency.tsv)");

  // sweep / run-experiment / report ----------------------------------------
  ExperimentFlags sw, rx;
  std::string sw_param = "T", sw_values = "1,2,5,10,15", sw_out, sw_svg;
  auto* swc = app.add_subcommand("sweep", "Retrain across values of one hyperparameter");
  AddExperimentOptions(swc, sw);
  swc->add_option("--param", sw_param, "T, delta, R, global-r or K")->capture_default_str();
  swc->add_option("--values", sw_values, "Comma-separated values")->capture_default_str();
  swc->add_option("--out", sw_out, "Sweep TSV (default: sweep_<param>.tsv)");
  swc->add_option("--svg", sw_svg, "Also plot accuracy against the parameter");

  std::string rx_out;
  auto* rxc = app.add_subcommand("run-experiment",
                                 "Full pipeline: embeddings, candidates, local and global models");
  AddExperimentOptions(rxc, rx);
  rxc->add_option("--out", rx_out, "Report directory (default: <data dir>/results)");

  std::vector<std::string> rp_inputs;
  std::string rp_out, rp_title;
  auto* rp = app.add_subcommand("report", "Plot sweep TSV files as an SVG chart");
  rp->add_option("--sweep", rp_inputs, "Sweep TSV, repeatable")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  rp->add_option("--out", rp_out, "SVG file")->required();
  rp->add_option("--title", rp_title, "Chart title");

  // grad-check --------------------------------------------------------------
  std::size_t gc_instances = 20;
  GradCheckOptions gco;
  gco.epsilon = 1e-3;
  gco.max_coordinates_per_block = 200;
  double gc_gamma = 0.01;
  auto* gcc = app.add_subcommand("grad-check", "Compare tape gradients with finite differences");
  gcc->group("");  // hidden
  gcc->add_option("--instances", gc_instances, "Instances per model")->capture_default_str();
  gcc->add_option("--epsilon", gco.epsilon, "Finite-difference step")->capture_default_str();
  gcc->add_option("--tolerance", gco.tolerance, "Relative error bound")->capture_default_str();
  gcc->add_option("--max-coordinates", gco.max_coordinates_per_block,
                  "Sampled coordinates per parameter block (0: all)")
      ->capture_default_str();
  gcc->add_option("--gamma", gc_gamma, "Ranking margin")->capture_default_str();

  try {
    // Locate --config and the subcommand before the real parse.
    std::vector<std::string> args(argv, argv + argc);
    std::string config;
    std::size_t sub_pos = 0;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
      if (args[i].starts_with("--config=")) config = args[i].substr(9);
      if (!sub_pos && app.get_subcommand_no_throw(args[i])) sub_pos = i;
    }
    if (!config.empty()) {
      const CLI::App* sub = sub_pos ? app.get_subcommand_no_throw(args[sub_pos]) : nullptr;
      auto injected = ConfigArgs(config, app, sub);
      const std::size_t at = sub_pos ? sub_pos + 1 : 1;
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(),
                  injected.end());
    }
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kIo ? 2 : 1;
  }

  try {
    if (g.threads == 0) throw Error("--threads must be at least 1");
    std::ostream* log = g.log();

    if (*gen) {
      spec.seed = g.seed;
      const std::string dir = gen_out.empty() ? g.data_dir : gen_out;
      SyntheticData data = GenerateSynthetic(spec);
      SaveSynthetic(dir, data);
      std::cout << "wrote synthetic benchmark to " << dir << ": " << data.train.docs.size()
                << " train, " << data.validation.docs.size() << " validation, "
                << data.test.docs.size() << " test documents\n";
    } else if (*emb) {
      ec.seed = g.seed;
      ec.threads = g.threads;
      EmbeddingStore store = LoadStore(g.Path(emb_words, "words.txt"), "", stop_words);
      const auto counts = LoadCounts(g.Path(emb_counts, "counts.tsv"), store, ec.alpha);
      std::vector<RelatednessQuery> val;
      const std::string vpath = g.Path(emb_validation, "relatedness_validation.tsv");
      if (!emb_validation.empty() || fs::exists(vpath)) val = LoadRelatednessQueries(vpath, store);
      const auto rep = TrainEmbeddings(counts, ec, store, val, log);
      const std::string out = g.Path(emb_out, "entities.txt");
      SaveVectorTable(out, store.EntityTable(), GuessVectorFormat(out));
      std::cout << "trained " << rep.trained.size() << " entities ("
                << rep.untrainable.size() << " without counts), " << rep.hyperlink_iterations_used
                << " hyperlink iterations\n";
      if (!val.empty()) {
        const auto m = EvalRelatedness(val, store);
        std::cout << "validation NDCG@1 " << FormatDouble(m.ndcg1) << " NDCG@5 "
                  << FormatDouble(m.ndcg5) << " NDCG@10 " << FormatDouble(m.ndcg10) << " MAP "
                  << FormatDouble(m.map) << "\n";
      }
      std::cout << "wrote " << out << "\n";
    } else if (*rel) {
      const auto table = LoadVectorTable(g.Path(rel_entities, "entities.txt"),
                                         GuessVectorFormat(g.Path(rel_entities, "entities.txt")));
      EmbeddingStore store(table.dim);
      store.LoadEntities(table);
      const auto queries = LoadRelatednessQueries(g.Path(rel_queries, "relatedness_test.tsv"), store);
      if (rel_random) RandomEntityVectors(store, g.seed);
      const auto m = EvalRelatedness(queries, store);
      std::cout << RenderTable({"NDCG@1", "NDCG@5", "NDCG@10", "MAP", "queries", "excluded"},
                               {{detail::Fixed(m.ndcg1), detail::Fixed(m.ndcg5),
                                 detail::Fixed(m.ndcg10), detail::Fixed(m.map),
                                 std::to_string(m.scored), std::to_string(m.excluded)}});
    } else if (*nb) {
      EmbeddingStore store = LoadStore(g.Path(nb_words, "words.txt"),
                                       g.Path(nb_entities, "entities.txt"), stop_words);
      const std::string cpath = g.Path(nb_counts, "counts.tsv");
      if (!nb_counts.empty() || fs::exists(cpath)) {
        const auto counts = LoadCounts(cpath, store, 0.6);
        const auto& freq = counts.word_frequency();
        for (std::uint32_t w = 0; w < freq.size() && w < store.words().size(); ++w)
          store.mutable_words().AddFrequency(WordId{w},
                                             static_cast<std::uint64_t>(std::llround(freq[w])));
      } else if (nb_min_freq > 0) {
        throw Error("--min-freq needs a counts file for word frequencies");
      }
      const auto e = store.entities().Find(nb_entity);
      if (!e || !store.HasEntityVector(*e))
        throw Error("entity '" + nb_entity + "' has no vector");
      std::vector<std::vector<std::string>> rows;
      std::size_t rank = 0;
      for (const auto& n : NearestWords(store, *e, nb_k, nb_min_freq))
        rows.push_back({std::to_string(++rank), store.words().Name(n.word),
                        detail::Fixed(n.similarity), std::to_string(store.words().Frequency(n.word))});
      std::cout << RenderTable({"rank", "word", "cosine", "frequency"}, rows);
    } else if (*bp) {
      if (bp_sources.empty()) bp_sources.push_back(g.Path("", "prior_counts.tsv"));
      EmbeddingStore store(1);
      std::vector<PriorSource> sources;
      for (const auto& s : bp_sources) {
        // path[:kind[:weight]], split from the right so paths may contain ':'.
        std::string path = s, kind = "count";
        double weight = 1.0;
        auto split_last = [](std::string& str) -> std::optional<std::string> {
          const auto pos = str.rfind(':');
          if (pos == std::string::npos) return std::nullopt;
          std::string tail = str.substr(pos + 1);
          str.resize(pos);
          return tail;
        };
        std::string probe = path;
        if (auto t = split_last(probe)) {
          if (auto w = ParseDouble(*t)) {
            std::string probe2 = probe;
            auto k = split_last(probe2);
            if (!k || (*k != "count" && *k != "uniform"))
              throw Error("bad --source '" + s + "': expected path[:count|uniform[:weight]]");
            weight = *w;
            kind = *k;
            path = probe2;
          } else if (*t == "count" || *t == "uniform") {
            kind = *t;
            path = probe;
          }
        }
        sources.push_back(LoadPriorSource(
            path, kind == "count" ? PriorSourceKind::kCount : PriorSourceKind::kUniform, store,
            weight));
      }
      const PriorIndex index = BuildPrior(sources);
      const std::string out = g.Path(bp_out, "prior.tsv");
      SavePriorIndex(out, index, store);
      std::cout << "merged " << sources.size() << " sources into " << index.size()
                << " mentions; wrote " << out << "\n";
    } else if (*sel) {
      if (sc.prior.empty()) sc.prior = g.Path("", "prior.tsv");
      EmbeddingStore store = LoadStore(g.Path(sc_words, "words.txt"),
                                       g.Path(sc_entities, "entities.txt"), stop_words);
      Corpus c = LoadCandidateCorpus(sc_corpus, store, sc, sc_k, log, Split::kTest, sc_format);
      SaveCorpus(sc_out, c.docs, store);
      const auto st = Stats(c.docs);
      std::cout << st.docs << " documents, " << st.mentions << " mentions; gold recall "
                << detail::Fixed(GoldRecall(c.docs), 2) << "%; wrote " << sc_out << "\n";
    } else if (*tlc || *tgc) {
      const bool global = tgc->parsed();
      TrainFlags& f = global ? tg : tl;
      EmbeddingStore store = LoadStore(g.Path(f.words, "words.txt"),
                                       g.Path(f.entities, "entities.txt"), stop_words);
      Corpus train = LoadCandidateCorpus(g.Path(f.train, "train.jsonl"), store, f.sel,
                                         f.model.k, log, Split::kTrain);
      Corpus val = LoadCandidateCorpus(g.Path(f.validation, "validation.jsonl"), store, f.sel,
                                       f.model.k, log, Split::kValidation);
      const Corpus both[] = {train, val};
      CheckDisjointIds(both);
      const auto ptrain = PrepareCorpus(train.docs, store, f.model.k);
      const auto pval = PrepareCorpus(val.docs, store, f.model.k);
      ModelFile mf;
      mf.context_k = f.model.k;
      if (!global) {
        LocalTrainConfig lc;
        lc.attention_r = f.r;
        lc.gamma = f.model.gamma;
        if (f.model.lr > 0) lc.learning_rate = f.model.lr;
        lc.weight_radius = f.model.radius;
        lc.schedule = MakeSchedule(f.model, DeriveSeed(g.seed, 11), log);
        LocalParams lp = LocalParams::Init(store.dim(), f.model.hidden, DeriveSeed(g.seed, 21),
                                           f.model.radius);
        PrintReport(TrainLocal(lp, ptrain, pval, store, lc));
        mf.kind = ModelKind::kLocal;
        mf.params.local = lp;
        mf.params.c.assign(lp.dim(), 1.0);
        mf.attention_r = f.r;
        mf.gamma = f.model.gamma;
      } else {
        GlobalTrainConfig gcfg;
        gcfg.settings = f.settings;
        gcfg.settings.gamma = f.model.gamma;
        if (f.model.lr > 0) gcfg.learning_rate = f.model.lr;
        gcfg.learning_rate_after = f.lr_after;
        gcfg.weight_radius = f.model.radius;
        gcfg.schedule = MakeSchedule(f.model, DeriveSeed(g.seed, 12), log);
        GlobalParams gp = GlobalParams::Init(store.dim(), f.model.hidden, DeriveSeed(g.seed, 22),
                                             f.model.radius);
        if (!f.init.empty()) {
          const ModelFile init = LoadModel(f.init);
          if (init.params.local.dim() != store.dim())
            throw Error("--init-local model dimension does not match the word vectors");
          gp.local = init.params.local;
        }
        PrintReport(TrainGlobal(gp, ptrain, pval, store, gcfg));
        mf.kind = ModelKind::kGlobal;
        mf.params = gp;
        mf.attention_r = gcfg.settings.attention_r;
        mf.gamma = gcfg.settings.gamma;
        mf.delta = gcfg.settings.delta;
        mf.layers = gcfg.settings.layers;
      }
      const std::string out = g.Path(f.out, global ? "global.model" : "local.model");
      SaveModel(out, mf);
      std::cout << "wrote " << out << "\n";
    } else if (*pr) {
      if (pr_model != "local" && pr_model != "global" && pr_model != "prior")
        throw Error("--model must be local, global or prior");
      EmbeddingStore store = LoadStore(g.Path(pr_words, "words.txt"),
                                       g.Path(pr_entities, "entities.txt"), stop_words);
      std::optional<ModelFile> mf;
      if (pr_model != "prior") {
        mf = LoadModel(g.Path(pr_model_file, (pr_model + ".model").c_str()));
        if (pr_model == "global" && mf->kind != ModelKind::kGlobal)
          throw Error("--model global needs a global model file");
        if (mf->params.local.dim() != store.dim())
          throw Error("model dimension does not match the word vectors");
      }
      const std::size_t k = mf ? mf->context_k : 100;
      Corpus c = LoadCandidateCorpus(g.Path(pr_corpus, "test.jsonl"), store, pr_sel, k, log,
                                     Split::kTest, pr_format);
      const auto prepared = PrepareCorpus(c.docs, store, k);
      std::vector<Predictions> preds;
      if (pr_model == "prior") {
        for (const auto& d : c.docs) preds.push_back(PredictPrior(d));
      } else if (pr_model == "local") {
        preds = PredictAll(
            prepared,
            [&](const PreparedDoc& d) { return PredictLocal(mf->params.local, d, mf->attention_r); },
            g.threads);
      } else {
        const auto s = mf->settings();
        preds = PredictAll(
            prepared, [&](const PreparedDoc& d) { return PredictGlobal(mf->params, d, s); },
            g.threads);
      }
      const std::string out = g.Path(pr_out, "predictions.tsv");
      {
        auto o = OpenForWrite(out);
        WritePredictions(o, c.docs, preds, store);
      }
      if (!pr_attention.empty()) {
        if (!mf) throw Error("--attention needs a local or global model");
        auto o = OpenForWrite(pr_attention);
        WriteAttentionDump(o, mf->params.local, prepared, preds, mf->attention_r, store);
      }
      std::size_t n = 0;
      for (const auto& p : preds) n += p.size();
      std::cout << "predicted " << n << " mentions in " << c.docs.size()
                << " documents; wrote " << out << "\n";
    } else if (*ev || *bd) {
      EmbeddingStore store(1);
      const std::string epath = g.Path(ev_entities, "entities.txt");
      if (fs::exists(epath) || !ev_entities.empty()) {
        const auto table = LoadVectorTable(epath, GuessVectorFormat(epath));
        store = EmbeddingStore(table.dim);
        store.LoadEntities(table);
      }
      Corpus c = LoadCorpus(g.Path(ev_corpus, "test.jsonl"), store);
      const auto preds = LoadPredictions(g.Path(ev_preds, "predictions.tsv"), c.docs, store);
      if (*ev) {
        const auto m = ScorePredictions(c.docs, preds, store);
        std::cout << MetricsTable({{"predictions", m}});
        if (!ev_out.empty()) {
          auto o = OpenForWrite(ev_out);
          WriteMetricRows(o, m);
        }
      } else {
        std::map<EntityId, double> freq;
        const std::string fpath = g.Path(ev_freq, "frequency.tsv");
        if (!ev_freq.empty() || fs::exists(fpath)) freq = LoadFrequencies(fpath, store);
        const auto r = Breakdown(c.docs, preds, freq);
        std::vector<std::vector<std::string>> rows;
        auto add = [&](const char* by, const std::vector<Bucket>& bs) {
          for (const auto& b : bs)
            rows.push_back({by, b.label, std::to_string(b.count), std::to_string(b.correct),
                            detail::Fixed(100 * b.accuracy(), 2)});
        };
        add("frequency", r.by_frequency);
        add("prior", r.by_prior);
        std::cout << RenderTable({"by", "bucket", "mentions", "correct", "accuracy"}, rows);
        if (!ev_out.empty()) {
          auto o = OpenForWrite(ev_out);
          WriteBreakdownTsv(o, r);
        }
      }
    } else if (*swc) {
      const SweepParam param = ParseSweepParam(sw_param);
      const auto values = ParseValues(sw_values);
      const ExperimentConfig cfg = Finish(sw, g);
      PreparedExperiment p = PrepareExperiment(cfg, log);
      const auto pts = RunSweep(cfg, p, param, values, log);
      const std::string out =
          g.Path(sw_out, ("sweep_" + std::string(SweepParamName(param)) + ".tsv").c_str());
      {
        auto o = OpenForWrite(out);
        WriteSweepTsv(o, param, pts);
      }
      std::cout << RenderSweepTable(param, pts) << "wrote " << out << "\n";
      if (!sw_svg.empty()) {
        PlotSeries val{"validation", {}}, test{"test", {}};
        for (const auto& pt : pts) {
          val.points.emplace_back(pt.value, 100 * pt.validation_accuracy);
          test.points.emplace_back(pt.value, 100 * pt.test_accuracy);
        }
        const PlotSeries series[] = {val, test};
        auto o = OpenForWrite(sw_svg);
        o << RenderSvgPlot(std::string("accuracy vs ") + SweepParamName(param),
                           SweepParamName(param), "accuracy (%)", series);
      }
    } else if (*rxc) {
      const ExperimentConfig cfg = Finish(rx, g);
      PreparedExperiment p = PrepareExperiment(cfg, log);
      const ExperimentResult r = RunExperiment(cfg, p, log);
      const std::string dir = rx_out.empty() ? (fs::path(g.data_dir) / "results").string() : rx_out;
      WriteExperimentOutputs(dir, cfg, p, r);
      std::cout << RenderReport(r, cfg.train_global) << "wrote " << dir << "\n";
    } else if (*rp) {
      std::vector<PlotSeries> series;
      std::string xlabel;
      for (const auto& path : rp_inputs) {
        auto in = OpenForRead(path);
        std::string name;
        const auto pts = ReadSweepTsv(in, &name);
        if (xlabel.empty()) xlabel = name;
        if (name != xlabel) throw Error("sweep files plot different parameters");
        PlotSeries s{fs::path(path).stem().string(), {}};
        for (const auto& pt : pts) s.points.emplace_back(pt.value, 100 * pt.test_accuracy);
        series.push_back(std::move(s));
      }
      auto o = OpenForWrite(rp_out);
      o << RenderSvgPlot(rp_title.empty() ? "test accuracy vs " + xlabel : rp_title, xlabel,
                         "accuracy (%)", series);
      std::cout << "wrote " << rp_out << "\n";
    } else if (*gcc) {
      if (gc_instances == 0) throw Error("--instances must be at least 1");
      bool ok = true;
      GlobalSettings gs;
      gs.attention_r = 5;
      gs.layers = 3;
      gs.delta = 0.5;
      gs.gamma = gc_gamma;
      for (const bool global : {false, true}) {
        double worst = 0.0;
        std::size_t checked = 0, skipped = 0;
        for (std::uint64_t i = 0; i < gc_instances; ++i) {
          RandomDocSpec rs;
          rs.mentions = global ? 3 : 2;
          auto inst = MakeRandomDoc(DeriveSeed(g.seed, i), rs);
          gco.seed = DeriveSeed(g.seed, 1000 + i);
          const auto r = global ? CheckGlobalGradient(inst, gs, gco)
                                : CheckLocalGradient(inst, 5, gc_gamma, gco);
          worst = std::max(worst, r.max_rel_error);
          checked += r.checked;
          skipped += r.skipped;
        }
        const bool pass = worst < gco.tolerance;
        ok = ok && pass;
        std::cout << (global ? "global" : "local") << ": max relative error "
                  << FormatDouble(worst) << " over " << checked << " coordinates (" << skipped
                  << " skipped at kinks) " << (pass ? "PASS" : "FAIL") << "\n";
      }
      return ok ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kIo ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
