#include <gtest/gtest.h>

#include <cmath>
#include <iostream>

#include "test_util.hpp"

using namespace deepel;
using namespace deepel::testing;

namespace {

ExperimentConfig SmallConfig() {
  ExperimentConfig c;
  auto& s = c.synthetic;
  s.kb_size = 60;
  s.signature_words = 6;
  s.vocab_size = 900;
  s.num_docs = 60;
  s.topics = 6;
  s.topic_words = 15;
  s.dim = 20;
  s.max_link_frequency = 10;
  s.relatedness_queries = 20;
  s.query_candidates = 20;
  c.embed.description_iterations = 100;
  c.embed.hyperlink_iterations = 100;
  c.context_k = 40;
  c.hidden = 10;
  c.local.attention_r = 10;
  c.local.schedule.max_epochs = 10;
  c.local.schedule.validate_every = 2;
  c.global.schedule.max_epochs = 4;
  c.global.schedule.validate_every = 2;
  c.global.settings.layers = 3;
  c.SetSeed(5);
  return c;
}

const PreparedExperiment& Prepared() {
  static const PreparedExperiment p = PrepareExperiment(SmallConfig());
  return p;
}

}  // namespace

TEST(Training, LocalImprovesOnValidation) {
  const auto cfg = SmallConfig();
  TrainReport rep;
  TrainLocalModel(Prepared(), cfg, &rep);
  ASSERT_GE(rep.curve.size(), 2u);
  EXPECT_GT(rep.best_accuracy, rep.curve[0].validation_accuracy);
  EXPECT_GT(rep.best_epoch, 0u);
  EXPECT_EQ(rep.epochs_run, 10u);
}

TEST(Training, LocalIsDeterministic) {
  const auto cfg = SmallConfig();
  const auto a = TrainLocalModel(Prepared(), cfg);
  const auto b = TrainLocalModel(Prepared(), cfg);
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.b, b.b);
  EXPECT_EQ(a.f.w2, b.f.w2);
}

TEST(Training, KeepsBestValidationModel) {
  auto cfg = SmallConfig();
  TrainReport rep;
  const auto lp = TrainLocalModel(Prepared(), cfg, &rep);
  EXPECT_DOUBLE_EQ(LocalAccuracy(lp, Prepared().validation, cfg.local.attention_r,
                                 Prepared().data.store),
                   rep.best_accuracy);
}

TEST(Training, PatienceStopsEarly) {
  auto cfg = SmallConfig();
  cfg.local.learning_rate = 0.0;  // nothing can improve
  cfg.local.schedule.patience = 4;
  TrainReport rep;
  TrainLocalModel(Prepared(), cfg, &rep);
  EXPECT_EQ(rep.best_epoch, 0u);
  EXPECT_EQ(rep.epochs_run, 4u);
}

TEST(Training, GlobalFromLocalIsDeterministicAndNotWorse) {
  const auto cfg = SmallConfig();
  const auto lp = TrainLocalModel(Prepared(), cfg);
  TrainReport rep;
  const auto g1 = TrainGlobalModel(Prepared(), cfg, &lp, &rep);
  const auto g2 = TrainGlobalModel(Prepared(), cfg, &lp);
  EXPECT_EQ(g1.c, g2.c);
  EXPECT_EQ(g1.local.f.w3, g2.local.f.w3);
  // The best model is kept, so validation accuracy never drops below the start.
  EXPECT_GE(rep.best_accuracy, rep.curve[0].validation_accuracy);
}

TEST(Training, ZeroValidationIntervalRejected) {
  auto cfg = SmallConfig();
  cfg.local.schedule.validate_every = 0;
  EXPECT_THROW(TrainLocalModel(Prepared(), cfg), Error);
}

// f has no shape constraint, so this only records how often raising the
// context score with the prior fixed fails to raise the score.
TEST(Training, CombinationMonotonicityProbe) {
  auto cfg = SmallConfig();
  cfg.local.schedule.max_epochs = 20;
  const auto lp = TrainLocalModel(Prepared(), cfg);
  std::size_t probes = 0, monotone = 0;
  for (int b = 0; b <= 10; ++b) {
    const double log_prior = std::log(1e-3) * (1.0 - b / 10.0);
    for (int a = 0; a < 20; ++a) {
      const double lo = -2.0 + 0.2 * a;
      ++probes;
      monotone += lp.f.Eval(lo + 0.2, log_prior) >= lp.f.Eval(lo, log_prior);
    }
  }
  const double rate = static_cast<double>(monotone) / static_cast<double>(probes);
  RecordProperty("monotone_rate", std::to_string(rate));
  std::cout << "f monotone in the context score on " << monotone << "/" << probes
            << " grid steps\n";
  if (rate < 0.95) std::cout << "note: below the 95% smoke-test level\n";
}
