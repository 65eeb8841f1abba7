#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace deepel;
using namespace deepel::testing;

namespace {

SyntheticSpec Small() {
  SyntheticSpec s;
  s.kb_size = 40;
  s.signature_words = 5;
  s.vocab_size = 600;
  s.num_docs = 30;
  s.topics = 4;
  s.topic_words = 10;
  s.dim = 12;
  s.context_k = 10;
  s.max_link_frequency = 5;
  s.relatedness_queries = 10;
  s.query_candidates = 20;
  return s;
}

std::vector<const Document*> AllDocs(const SyntheticData& d) {
  std::vector<const Document*> out;
  for (const Corpus* c : {&d.train, &d.validation, &d.test})
    for (const auto& doc : c->docs) out.push_back(&doc);
  return out;
}

std::string Dump(const SyntheticData& d) {
  TempDir dir;
  SaveSynthetic(dir.path().string(), d);
  std::string all;
  for (const char* f : {"words.txt", "counts.tsv", "prior_counts.tsv", "train.jsonl",
                        "validation.jsonl", "test.jsonl", "relatedness_test.tsv",
                        "frequency.tsv", "signatures.tsv"})
    all += ReadFile(dir.File(f));
  return all;
}

}  // namespace

TEST(Synthetic, SameSeedSameBytes) {
  const auto a = Dump(GenerateSynthetic(Small()));
  EXPECT_EQ(a, Dump(GenerateSynthetic(Small())));
  auto other = Small();
  other.seed = 2;
  EXPECT_NE(a, Dump(GenerateSynthetic(other)));
}

TEST(Synthetic, SplitSizesAndDocShape) {
  const auto s = Small();
  const auto d = GenerateSynthetic(s);
  EXPECT_EQ(d.train.docs.size(), 18u);
  EXPECT_EQ(d.validation.docs.size(), 6u);
  EXPECT_EQ(d.test.docs.size(), 6u);
  for (const Document* doc : AllDocs(d)) {
    ASSERT_EQ(doc->mentions.size(), s.mentions_per_doc);
    EXPECT_EQ(doc->tokens.size(), s.mentions_per_doc * (s.context_k + 1));
    EXPECT_NO_THROW(ValidateDocument(*doc));
    for (const auto& m : doc->mentions) ASSERT_TRUE(m.gold);
  }
}

TEST(Synthetic, FullCoherenceKeepsOneTopicPerDoc) {
  auto s = Small();
  s.coherence = 1.0;
  const auto d = GenerateSynthetic(s);
  for (const Document* doc : AllDocs(d)) {
    std::set<std::size_t> topics;
    for (const auto& m : doc->mentions) topics.insert(d.entity_topic[m.gold->value]);
    EXPECT_EQ(topics.size(), 1u) << doc->id;
  }
}

TEST(Synthetic, UnambiguousFormsMakePriorPerfect) {
  auto s = Small();
  s.ambiguity = 1;
  auto d = GenerateSynthetic(s);
  RandomEntityVectors(d.store, 3);
  std::size_t total = 0, correct = 0;
  for (auto& doc : d.test.docs) {
    SelectDocumentCandidates(doc, d.prior, d.store, s.context_k);
    const auto p = PredictPrior(doc);
    for (std::size_t i = 0; i < doc.mentions.size(); ++i, ++total)
      correct += p[i] == doc.mentions[i].gold;
  }
  EXPECT_EQ(correct, total);
}

TEST(Synthetic, GoldAlwaysAmongSevenCandidates) {
  auto d = GenerateSynthetic(Small());
  RandomEntityVectors(d.store, 3);
  for (auto& doc : d.test.docs) SelectDocumentCandidates(doc, d.prior, d.store, 10);
  EXPECT_DOUBLE_EQ(GoldRecall(d.test.docs), 100.0);
}

TEST(Synthetic, PriorFavoursHeadEntity) {
  const auto d = GenerateSynthetic(Small());
  const auto list = d.prior.Lookup("m0007");
  ASSERT_EQ(list.size(), 4u);
  EXPECT_EQ(list[0].entity.value, 7u);
  EXPECT_GT(list[0].prob, list[1].prob);
}

TEST(Synthetic, InvalidSpecsRejected) {
  auto check = [](auto mutate) {
    auto s = Small();
    mutate(s);
    try {
      GenerateSynthetic(s);
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kValidation);
      EXPECT_EQ(std::string(e.what()).rfind("synthetic spec: ", 0), 0u) << e.what();
    }
  };
  check([](SyntheticSpec& s) { s.coherence = 1.5; });
  check([](SyntheticSpec& s) { s.ambiguity = 41; });
  check([](SyntheticSpec& s) { s.vocab_size = 200; });
  check([](SyntheticSpec& s) { s.num_docs = 0; });
  check([](SyntheticSpec& s) { s.test_fraction = 0.9; });
}
