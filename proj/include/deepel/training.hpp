// Epoch loops for the local and global models: per-document minibatches,
// periodic validation, early stopping on validation accuracy and restoring
// the best snapshot.
#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "deepel/embed.hpp"
#include "deepel/global.hpp"
#include "deepel/local.hpp"
#include "deepel/metrics.hpp"
#include "deepel/optim.hpp"
#include "deepel/sampling.hpp"

namespace deepel {

/// Scores per-document predictions against gold. Gold entities without a
/// vector count as outside the KB.
inline DisambiguationMetrics ScorePredictions(std::span<const Document> docs,
                                              std::span<const Predictions> preds,
                                              const EmbeddingStore& store) {
  if (docs.size() != preds.size()) throw Error("one prediction list per document");
  std::vector<MentionOutcome> outcomes;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& doc = docs[d];
    if (preds[d].size() != doc.mentions.size())
      throw Error("prediction count mismatch in document " + doc.id);
    for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
      const auto& m = doc.mentions[i];
      if (!m.gold) continue;
      MentionOutcome o;
      o.predicted = preds[d][i].has_value();
      o.correct = o.predicted && *preds[d][i] == *m.gold;
      o.gold_in_kb = store.HasEntityVector(*m.gold);
      outcomes.push_back(o);
    }
  }
  return Evaluate(outcomes);
}

/// Runs `predict` over all documents, optionally in parallel.
inline std::vector<Predictions> PredictAll(
    std::span<const PreparedDoc> docs,
    const std::function<Predictions(const PreparedDoc&)>& predict,
    std::size_t threads = 1) {
  std::vector<Predictions> out(docs.size());
  detail::ParallelFor(docs.size(), threads,
                      [&](std::size_t i) { out[i] = predict(docs[i]); });
  return out;
}

/// The most frequent-prior baseline: argmax prior, ties by EntityId.
inline Predictions PredictPrior(const Document& doc) {
  Predictions out(doc.mentions.size());
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& c = doc.mentions[i].candidates;
    if (c.empty()) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < c.size(); ++k)
      if (c[k].prior > c[best].prior ||
          (c[k].prior == c[best].prior && c[k].entity < c[best].entity))
        best = k;
    out[i] = c[best].entity;
  }
  return out;
}

struct TrainSchedule {
  std::size_t max_epochs = 100;
  std::size_t validate_every = 5;
  std::size_t patience = 500;  // epochs without improvement before stopping
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;
};

struct TrainCurvePoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainReport {
  std::vector<TrainCurvePoint> curve;
  double best_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

template <class Model>
struct TrainHooks {
  std::function<Var(Tape&, const Model&, std::size_t)> loss;  // per document
  std::function<void(Model&, const Tape&)> step;
  std::function<double(const Model&)> validate;
  std::function<void(double)> on_validation;  // optional
};

template <class Model>
TrainReport RunTraining(Model& model, std::size_t num_docs,
                        const TrainHooks<Model>& hooks,
                        const TrainSchedule& schedule) {
  if (schedule.validate_every == 0) throw Error("validate_every must be positive");
  TrainReport report;
  Model best = model;
  report.best_accuracy = hooks.validate(model);
  report.curve.push_back({0, 0.0, report.best_accuracy});
  if (hooks.on_validation) hooks.on_validation(report.best_accuracy);

  std::vector<std::size_t> order(num_docs);
  for (std::size_t i = 0; i < num_docs; ++i) order[i] = i;
  std::mt19937_64 rng(DeriveSeed(schedule.seed, 0x7472));

  for (std::size_t epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    Shuffle(order, rng);
    double total = 0.0;
    for (std::size_t d : order) {
      Tape t;
      Var loss = hooks.loss(t, model, d);
      const double v = loss.scalar();
      total += v;
      if (v <= 0.0) continue;  // every hinge inactive: zero gradient
      t.Backward(loss);
      hooks.step(model, t);
    }
    report.epochs_run = epoch;
    const bool last = epoch == schedule.max_epochs;
    if (epoch % schedule.validate_every != 0 && !last) continue;
    const double acc = hooks.validate(model);
    report.curve.push_back({epoch, total, acc});
    if (schedule.log)
      *schedule.log << "epoch " << epoch << " loss " << FormatDouble(total)
                    << " validation " << FormatDouble(acc) << "\n";
    if (hooks.on_validation) hooks.on_validation(acc);
    if (acc > report.best_accuracy) {
      report.best_accuracy = acc;
      report.best_epoch = epoch;
      best = model;
    } else if (epoch - report.best_epoch >= schedule.patience) {
      break;
    }
  }
  model = std::move(best);
  return report;
}

// ---------------------------------------------------------------------------

struct LocalTrainConfig {
  std::size_t attention_r = 50;
  double gamma = 0.01;
  double learning_rate = 1e-3;
  double weight_radius = 1.0;
  TrainSchedule schedule;
};

inline double LocalAccuracy(const LocalParams& p, std::span<const PreparedDoc> docs,
                            std::size_t r, const EmbeddingStore& store) {
  std::vector<Document> plain;
  std::vector<Predictions> preds;
  for (const auto& d : docs) preds.push_back(PredictLocal(p, d, r));
  for (const auto& d : docs) plain.push_back(*d.doc);
  return ScorePredictions(plain, preds, store).in_kb_accuracy;
}

inline TrainReport TrainLocal(LocalParams& params, std::span<const PreparedDoc> train,
                              std::span<const PreparedDoc> validation,
                              const EmbeddingStore& store,
                              const LocalTrainConfig& cfg) {
  Sgd sgd(cfg.learning_rate);
  TrainHooks<LocalParams> hooks;
  hooks.loss = [&](Tape& t, const LocalParams& p, std::size_t d) {
    LocalVars v = BindParams(t, p);
    return LocalRankLoss(t, v, train[d], cfg.attention_r, cfg.gamma);
  };
  hooks.step = [&](LocalParams& p, const Tape& t) {
    sgd.Step(p.Blocks(), t);
    p.f.Project(cfg.weight_radius);
  };
  hooks.validate = [&](const LocalParams& p) {
    return LocalAccuracy(p, validation.empty() ? train : validation,
                         cfg.attention_r, store);
  };
  return RunTraining(params, train.size(), hooks, cfg.schedule);
}

struct GlobalTrainConfig {
  GlobalSettings settings;
  double learning_rate = 1e-4;
  double learning_rate_after = 1e-5;
  double drop_above = 0.9;  // validation accuracy that triggers the drop
  double weight_radius = 1.0;
  TrainSchedule schedule;
};

inline double GlobalAccuracy(const GlobalParams& p, std::span<const PreparedDoc> docs,
                             const GlobalSettings& s, const EmbeddingStore& store) {
  std::vector<Document> plain;
  std::vector<Predictions> preds;
  for (const auto& d : docs) {
    preds.push_back(PredictGlobal(p, d, s));
    plain.push_back(*d.doc);
  }
  return ScorePredictions(plain, preds, store).in_kb_accuracy;
}

inline TrainReport TrainGlobal(GlobalParams& params, std::span<const PreparedDoc> train,
                               std::span<const PreparedDoc> validation,
                               const EmbeddingStore& store,
                               const GlobalTrainConfig& cfg) {
  Adam adam(cfg.learning_rate);
  TrainHooks<GlobalParams> hooks;
  hooks.loss = [&](Tape& t, const GlobalParams& p, std::size_t d) {
    GlobalVars v = BindParams(t, p);
    return GlobalRankLoss(t, v, train[d], cfg.settings);
  };
  hooks.step = [&](GlobalParams& p, const Tape& t) {
    adam.Step(p.Blocks(), t);
    p.local.f.Project(cfg.weight_radius);
  };
  hooks.validate = [&](const GlobalParams& p) {
    return GlobalAccuracy(p, validation.empty() ? train : validation,
                          cfg.settings, store);
  };
  hooks.on_validation = [&](double acc) {
    if (acc > cfg.drop_above) adam.set_learning_rate(cfg.learning_rate_after);
  };
  return RunTraining(params, train.size(), hooks, cfg.schedule);
}

}  // namespace deepel
