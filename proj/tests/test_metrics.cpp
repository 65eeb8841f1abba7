#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace deepel;

TEST(RankingMetrics, PerfectRanking) {
  const std::vector<int> labels{1, 1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(NdcgAtK(labels, 1), 1.0);
  EXPECT_DOUBLE_EQ(NdcgAtK(labels, 5), 1.0);
  EXPECT_DOUBLE_EQ(NdcgAtK(labels, 10), 1.0);
  EXPECT_DOUBLE_EQ(AveragePrecision(labels), 1.0);
}

TEST(RankingMetrics, RelevantAtRankTwoOfTwo) {
  const std::vector<int> labels{0, 1};
  EXPECT_DOUBLE_EQ(AveragePrecision(labels), 0.5);
  EXPECT_DOUBLE_EQ(NdcgAtK(labels, 1), 0.0);
  EXPECT_NEAR(NdcgAtK(labels, 2), 1.0 / std::log2(3.0), 1e-12);
}

TEST(RankingMetrics, HandComputedMixedRanking) {
  // relevant at ranks 1, 3, 4 of 5
  const std::vector<int> labels{1, 0, 1, 1, 0};
  EXPECT_NEAR(AveragePrecision(labels), (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0, 1e-12);
  const double dcg = 1.0 + 1.0 / std::log2(4.0) + 1.0 / std::log2(5.0);
  const double idcg = 1.0 + 1.0 / std::log2(3.0) + 1.0 / std::log2(4.0);
  EXPECT_NEAR(NdcgAtK(labels, 5), dcg / idcg, 1e-12);
}

TEST(RankingMetrics, ReversingImprovesBottomPositive) {
  const std::vector<int> bad{0, 0, 0, 1};
  const std::vector<int> good{1, 0, 0, 0};
  EXPECT_GT(AveragePrecision(good), AveragePrecision(bad));
  EXPECT_GT(NdcgAtK(good, 5), NdcgAtK(bad, 5));
}

TEST(RankingMetrics, NoRelevantIsZero) {
  const std::vector<int> labels{0, 0};
  EXPECT_EQ(AveragePrecision(labels), 0.0);
  EXPECT_EQ(NdcgAtK(labels, 5), 0.0);
}

TEST(Disambiguation, ThreeOfFourAnnotatedAllCorrect) {
  std::vector<MentionOutcome> o(4);
  for (int i = 0; i < 3; ++i) o[i] = {true, true, true};
  o[3] = {false, false, true};
  auto m = Evaluate(o);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_NEAR(m.f1, 0.857, 1e-3);
  EXPECT_NEAR(m.f1, 6.0 / 7.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.in_kb_accuracy, 0.75);
}

TEST(Disambiguation, NoPredictions) {
  std::vector<MentionOutcome> o(3, MentionOutcome{false, false, true});
  auto m = Evaluate(o);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_EQ(Evaluate({}).f1, 0.0);
}

TEST(Disambiguation, PrecisionCanExceedOrTrailRecall) {
  // Precision above recall: some mentions unpredicted.
  std::vector<MentionOutcome> a{{true, true, true}, {false, false, true}};
  auto ma = Evaluate(a);
  EXPECT_GT(ma.precision, ma.recall);
  // Equal when every mention receives a prediction.
  std::vector<MentionOutcome> b{{true, true, true}, {true, false, true}};
  auto mb = Evaluate(b);
  EXPECT_DOUBLE_EQ(mb.precision, mb.recall);
}

TEST(Disambiguation, InKbAccuracyIgnoresOutOfKbGold) {
  std::vector<MentionOutcome> o{{true, true, true}, {true, false, false}, {true, false, true}};
  auto m = Evaluate(o);
  EXPECT_EQ(m.in_kb_gold, 2u);
  EXPECT_DOUBLE_EQ(m.in_kb_accuracy, 0.5);
  EXPECT_NEAR(m.recall, 1.0 / 3.0, 1e-12);
}
