#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace deepel;
using namespace deepel::testing;

namespace {

std::map<std::string, double> PriorsByName(const PriorIndex& idx, const EmbeddingStore& store,
                                           const std::string& mention) {
  std::map<std::string, double> out;
  for (auto& ep : idx.Lookup(mention)) out[store.entities().Name(ep.entity)] = ep.prob;
  return out;
}

// Entity i has vector e_{i mod d}; context words are basis vectors too.
EmbeddingStore BasisStore(std::size_t d, std::size_t entities) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < d; ++k) {
    names.push_back("w" + std::to_string(k));
    std::vector<double> v(d, 0.0);
    v[k] = 1.0;
    rows.push_back(v);
  }
  auto store = StoreFromRows(names, rows);
  for (std::size_t i = 0; i < entities; ++i) {
    const EntityId e = store.AddEntity("E" + std::to_string(i));
    std::vector<double> v(d, 0.0);
    v[i % d] = 1.0;
    store.SetEntity(e, v);
  }
  return store;
}

}  // namespace

TEST(Prior, SingleCountSourceNormalizes) {
  EmbeddingStore store(2);
  PriorSource src;
  src.Add("Paris", store.AddEntity("e1"), 3);
  src.Add("Paris", store.AddEntity("e2"), 1);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  auto p = PriorsByName(idx, store, "Paris");
  EXPECT_DOUBLE_EQ(p["e1"], 0.75);
  EXPECT_DOUBLE_EQ(p["e2"], 0.25);
}

TEST(Prior, TwoSourcesAreAveraged) {
  EmbeddingStore store(2);
  const EntityId e1 = store.AddEntity("e1"), e2 = store.AddEntity("e2");
  PriorSource a, b;
  a.Add("m", e1, 1.0);
  b.Add("m", e1, 0.5);
  b.Add("m", e2, 0.5);
  auto idx = BuildPrior(std::vector<PriorSource>{a, b});
  EXPECT_NEAR(idx.Prior("m", e1), 0.75, 1e-12);
  EXPECT_NEAR(idx.Prior("m", e2), 0.25, 1e-12);
}

TEST(Prior, UniformSource) {
  EmbeddingStore store(2);
  PriorSource u;
  u.kind = PriorSourceKind::kUniform;
  for (int i = 0; i < 4; ++i) u.Add("m", store.AddEntity("e" + std::to_string(i)));
  auto idx = BuildPrior(std::vector<PriorSource>{u});
  for (auto& ep : idx.Lookup("m")) EXPECT_DOUBLE_EQ(ep.prob, 0.25);
}

TEST(Prior, SumsToOneAndCaseFallback) {
  std::mt19937_64 rng(1);
  EmbeddingStore store(2);
  PriorSource src;
  for (int i = 0; i < 20; ++i)
    src.Add("New  York ", store.AddEntity("e" + std::to_string(i)), 1 + UniformIndex(rng, 9));
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  double s = 0;
  for (auto& ep : idx.Lookup("New York")) s += ep.prob;
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_EQ(idx.Lookup("new york").size(), 20u);
  EXPECT_TRUE(idx.Lookup("Boston").empty());
}

TEST(Prior, FileRoundTrip) {
  TempDir dir;
  WriteFile(dir.File("p.tsv"), "Paris\tParis_FR\t3\nParis\tParis_TX\t1\n");
  EmbeddingStore store(2);
  auto idx = LoadPriorIndex(dir.File("p.tsv"), store);
  SavePriorIndex(dir.File("out.tsv"), idx, store);
  EmbeddingStore store2(2);
  auto back = LoadPriorIndex(dir.File("out.tsv"), store2);
  EXPECT_EQ(PriorsByName(idx, store, "Paris"), PriorsByName(back, store2, "Paris"));
  WriteFile(dir.File("bad.tsv"), "Paris\tX\n");
  EXPECT_THROW(LoadPriorIndex(dir.File("bad.tsv"), store), Error);
}

TEST(Selection, FewerThanSKeepsAll) {
  auto store = BasisStore(4, 3);
  PriorSource src;
  for (std::uint32_t i = 0; i < 3; ++i) src.Add("m", EntityId{i}, 3 - i);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  auto c = SelectCandidates("m", {}, idx, store);
  ASSERT_EQ(c.size(), 3u);
  for (auto& x : c) EXPECT_EQ(x.reason, SelectionReason::kPriorTop);
}

TEST(Selection, DisjointPriorAndContextTop) {
  // 30 entities, prior decreasing with id; context points at e25, e26, e27.
  const std::size_t d = 30;
  auto store = BasisStore(d, 30);
  PriorSource src;
  for (std::uint32_t i = 0; i < 30; ++i) src.Add("m", EntityId{i}, 30 - i);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  std::vector<WordId> ctx{WordId{25}, WordId{25}, WordId{25}, WordId{26}, WordId{26}, WordId{27}};
  auto c = SelectCandidates("m", ctx, idx, store);
  ASSERT_EQ(c.size(), 7u);
  std::vector<std::uint32_t> ids;
  int prior_top = 0, context_top = 0;
  for (auto& x : c) {
    ids.push_back(x.entity.value);
    (x.reason == SelectionReason::kPriorTop ? prior_top : context_top)++;
    EXPECT_DOUBLE_EQ(x.prior, idx.Prior("m", x.entity));
  }
  EXPECT_EQ(ids, (std::vector<std::uint32_t>{0, 1, 2, 3, 25, 26, 27}));
  EXPECT_EQ(prior_top, 4);
  EXPECT_EQ(context_top, 3);
}

TEST(Selection, ContextTopInsidePriorTopPromotesNext) {
  const std::size_t d = 30;
  auto store = BasisStore(d, 30);
  PriorSource src;
  for (std::uint32_t i = 0; i < 30; ++i) src.Add("m", EntityId{i}, 30 - i);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  // Context ranking: e1 (already prior-top), then e20, e21, e22.
  std::vector<WordId> ctx{WordId{1}, WordId{1}, WordId{1}, WordId{1},
                          WordId{20}, WordId{20}, WordId{20}, WordId{21}, WordId{21}, WordId{22}};
  auto c = SelectCandidates("m", ctx, idx, store);
  ASSERT_EQ(c.size(), 7u);
  std::set<std::uint32_t> ids;
  for (auto& x : c) ids.insert(x.entity.value);
  EXPECT_EQ(ids, (std::set<std::uint32_t>{0, 1, 2, 3, 20, 21, 22}));
}

TEST(Selection, EntitiesWithoutVectorsSkipped) {
  auto store = BasisStore(4, 2);
  const EntityId novec = store.AddEntity("NOVEC");
  PriorSource src;
  src.Add("m", novec, 10);
  src.Add("m", EntityId{0}, 1);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  auto c = SelectCandidates("m", {}, idx, store);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].entity, EntityId{0});
}

TEST(Selection, AgreesWithOracleOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int inst = 0; inst < 300; ++inst) {
    const std::size_t d = 6;
    const std::size_t n = 1 + UniformIndex(rng, 45);
    std::vector<std::string> words;
    std::vector<std::vector<double>> rows;
    for (int w = 0; w < 12; ++w) {
      words.push_back("w" + std::to_string(w));
      rows.push_back(RandomVector(rng, d));
    }
    auto store = StoreFromRows(words, rows);
    std::vector<oracle::PoolEntry> entries;
    PriorSource src;
    for (std::size_t i = 0; i < n; ++i) {
      const EntityId e = store.AddEntity("e" + std::to_string(i));
      const bool has = Uniform01(rng) < 0.9;
      std::vector<double> v = RandomVector(rng, d);
      if (has) store.SetEntity(e, v);
      // Coarse counts create prior ties.
      const double count = 1 + static_cast<double>(UniformIndex(rng, 5));
      src.Add("m", e, count);
      entries.push_back({static_cast<int>(e.value), 0.0, has,
                         has ? std::vector<double>(store.Entity(e).begin(), store.Entity(e).end())
                             : v});
    }
    auto idx = BuildPrior(std::vector<PriorSource>{src});
    for (auto& e : entries) e.prior = idx.Prior("m", EntityId{static_cast<std::uint32_t>(e.entity)});
    std::vector<WordId> ctx;
    std::vector<std::vector<double>> ctx_vecs;
    for (std::size_t k = 0, nk = UniformIndex(rng, 8); k < nk; ++k) {
      const auto w = static_cast<std::uint32_t>(UniformIndex(rng, 12));
      ctx.push_back(WordId{w});
      ctx_vecs.push_back(rows[w]);
    }
    auto got = SelectCandidates("m", ctx, idx, store);
    auto want = oracle::SelectCandidates(entries, ctx_vecs);
    ASSERT_EQ(got.size(), want.size()) << "instance " << inst;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(static_cast<int>(got[i].entity.value), want[i].entity) << "instance " << inst;
      EXPECT_EQ(got[i].reason == SelectionReason::kContextTop, want[i].by_context);
    }
  }
}

TEST(Coref, ShortPersonMentionInheritsCandidates) {
  EmbeddingStore store(2);
  const EntityId such = store.AddEntity("Peter_Such");
  const EntityId pan = store.AddEntity("Peter_Pan");
  const EntityId city = store.AddEntity("Peter_City");
  PriorSource src;
  src.Add("Peter Such", such, 10);
  src.Add("Peter", pan, 5);
  src.Add("Peter", city, 1);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  Document doc;
  doc.id = "d";
  doc.tokens = {"Peter", "Such", "bowled", "well", "and", "Peter", "smiled"};
  doc.mentions = {{0, 2, "Peter Such", such, {{such, 1.0}}},
                  {5, 6, "Peter", such, {{pan, 5.0 / 6}, {city, 1.0 / 6}}}};
  auto is_person = [&](EntityId e) { return e == such || e == pan; };
  CorefPersonMerge(doc, idx, is_person);
  ASSERT_EQ(doc.mentions[1].candidates.size(), 1u);
  EXPECT_EQ(doc.mentions[1].candidates[0].entity, such);
  EXPECT_EQ(doc.mentions[0].candidates.size(), 1u);
}

TEST(Coref, NonPersonTopCandidateUnchanged) {
  EmbeddingStore store(2);
  const EntityId such = store.AddEntity("Peter_Such");
  const EntityId city = store.AddEntity("Peter_City");
  PriorSource src;
  src.Add("Peter Such", such, 1);
  src.Add("Peter", city, 1);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  Document doc;
  doc.tokens = {"Peter", "Such", "Peter"};
  doc.mentions = {{0, 2, "Peter Such", such, {{such, 1.0}}}, {2, 3, "Peter", city, {{city, 1.0}}}};
  CorefPersonMerge(doc, idx, [&](EntityId e) { return e == such; });
  ASSERT_EQ(doc.mentions[1].candidates.size(), 1u);
  EXPECT_EQ(doc.mentions[1].candidates[0].entity, city);
}

TEST(Coref, UnionOfTwoContainingMentionsPrunedToS) {
  EmbeddingStore store(2);
  std::vector<EntityId> e;
  for (int i = 0; i < 8; ++i) e.push_back(store.AddEntity("P" + std::to_string(i)));
  PriorSource src;
  src.Add("John", e[0], 1);
  auto idx = BuildPrior(std::vector<PriorSource>{src});
  Document doc;
  doc.tokens = {"John", "Smith", "met", "John", "Brown", "and", "John"};
  // Candidate sets overlap on P2; union has 7 distinct entities before pruning to 5.
  doc.mentions = {
      {0, 2, "John Smith", e[1], {{e[1], 0.5}, {e[2], 0.3}, {e[3], 0.2}, {e[4], 0.05}}},
      {3, 5, "John Brown", e[5], {{e[5], 0.6}, {e[2], 0.35}, {e[6], 0.04}, {e[7], 0.01}}},
      {6, 7, "John", std::nullopt, {{e[0], 1.0}}}};
  CorefPersonMerge(doc, idx, [](EntityId) { return true; }, 5);
  std::vector<EntityId> got;
  for (auto& c : doc.mentions[2].candidates) got.push_back(c.entity);
  // By prior: P5 .6, P1 .5, P2 .35 (max of .3/.35), P3 .2, P4 .05
  EXPECT_EQ(got, (std::vector<EntityId>{e[5], e[1], e[2], e[3], e[4]}));
  EXPECT_EQ(doc.mentions[0].candidates.size(), 4u);
}

TEST(GoldRecall, Counting) {
  Document doc;
  doc.tokens = {"a", "b", "c", "d"};
  for (std::size_t i = 0; i < 4; ++i)
    doc.mentions.push_back({i, i + 1, "x", EntityId{0}, {{EntityId{0}, 1.0}}});
  EXPECT_DOUBLE_EQ(GoldRecall(std::vector<Document>{doc}), 100.0);
  doc.mentions[3].candidates = {{EntityId{1}, 1.0}};
  EXPECT_DOUBLE_EQ(GoldRecall(std::vector<Document>{doc}), 75.0);
}

TEST(ContextWindow, SkipsStopWordsAndUnknownsWithinBudget) {
  auto store = StoreFromRows({"a", "b", "c", "d", "the"}, std::vector<std::vector<double>>(5, {1.0}));
  store.mutable_words().MarkStopWords({"the"});
  Document doc;
  doc.tokens = {"a", "b", "the", "zzz", "c", "MENTION", "the", "d", "a", "b"};
  Mention m{5, 6, "MENTION", std::nullopt, {}};
  auto ctx = BuildContextWindow(doc, m, store, 4);
  std::vector<std::string> got;
  for (auto w : ctx) got.push_back(store.words().Name(w));
  EXPECT_EQ(got, (std::vector<std::string>{"b", "c", "d", "a"}));
}
