// Desk-scale synthetic benchmark: topics, entities with signature words,
// ambiguous surface forms with skewed priors, and topically coherent
// documents whose mention contexts mix signature, topic and noise words.
#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "deepel/candidates.hpp"
#include "deepel/corpus.hpp"
#include "deepel/embed.hpp"
#include "deepel/sampling.hpp"

namespace deepel {

struct SyntheticSpec {
  std::size_t kb_size = 200;
  std::size_t signature_words = 10;  // per entity
  std::size_t vocab_size = 3000;
  std::size_t num_docs = 300;
  std::size_t mentions_per_doc = 6;
  std::size_t ambiguity = 4;       // candidates per surface form
  double coherence = 0.9;          // P(all gold entities of a doc share its topic)
  double noise_rate = 0.5;         // mean fraction of noise tokens in a context
  std::uint64_t seed = 1;

  std::size_t topics = 10;
  std::size_t topic_words = 30;    // per topic
  std::size_t dim = 50;
  std::size_t context_k = 40;      // tokens around each mention
  double weak_context_rate = 0.2;  // mentions whose context is pure noise
  double signature_share = 0.3;    // of the informative tokens
  double prior_decay = 0.6;        // count ratio between consecutive prior ranks
  std::size_t max_link_frequency = 60;
  std::size_t link_window = 10;
  std::size_t relatedness_queries = 80;
  std::size_t query_candidates = 50;
  double query_positive_rate = 0.2;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;

  std::size_t noise_vocab() const {
    return vocab_size - kb_size * signature_words - topics * topic_words;
  }

  void Validate() const {
    auto positive = [](bool ok, const char* what) {
      if (!ok) throw Error(std::string("synthetic spec: ") + what);
    };
    positive(kb_size > 0 && signature_words > 0 && vocab_size > 0 && num_docs > 0 &&
                 mentions_per_doc > 0 && ambiguity > 0 && topics > 0 &&
                 topic_words > 0 && dim > 0 && context_k >= 2,
             "sizes must be positive");
    positive(ambiguity <= kb_size, "ambiguity degree exceeds KB size");
    positive(topics <= kb_size, "more topics than entities");
    positive(kb_size * signature_words + topics * topic_words < vocab_size,
             "signature and topic words exceed the vocabulary");
    positive(coherence >= 0.0 && coherence <= 1.0, "coherence must lie in [0, 1]");
    positive(noise_rate >= 0.0 && noise_rate <= 1.0, "noise rate must lie in [0, 1]");
    positive(weak_context_rate >= 0.0 && weak_context_rate <= 1.0,
             "weak context rate must lie in [0, 1]");
    positive(signature_share >= 0.0 && signature_share <= 1.0,
             "signature share must lie in [0, 1]");
    positive(prior_decay > 0.0 && prior_decay <= 1.0, "prior decay must lie in (0, 1]");
    positive(query_positive_rate > 0.0 && query_positive_rate < 1.0,
             "query positive rate must lie in (0, 1)");
    positive(validation_fraction >= 0.0 && test_fraction >= 0.0 &&
                 validation_fraction + test_fraction < 1.0,
             "split fractions must leave training documents");
  }
};

struct SyntheticData {
  EmbeddingStore store;  // word vectors and the entity vocabulary
  Corpus train, validation, test;
  CooccurrenceCounts counts;
  PriorSource prior_counts;
  PriorIndex prior;
  std::vector<RelatednessQuery> relatedness_validation, relatedness_test;
  std::map<EntityId, double> frequency;       // hyperlink frequency
  std::vector<std::vector<WordId>> signatures;  // by entity
  std::vector<std::size_t> entity_topic;
};

namespace detail {

inline std::vector<double> RandomUnit(std::size_t d, std::mt19937_64& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = StandardNormal(rng);
  NormalizeInPlace(v);
  return v;
}

inline std::vector<double> Mix(std::initializer_list<std::pair<double, const std::vector<double>*>> parts) {
  std::vector<double> out((*parts.begin()).second->size(), 0.0);
  for (auto& [w, v] : parts)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (*v)[i];
  NormalizeInPlace(out);
  return out;
}

inline std::string Padded(const char* prefix, std::size_t i, std::size_t width = 4) {
  std::string s = std::to_string(i);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return prefix + s;
}

}  // namespace detail

inline SyntheticData GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  const std::size_t d = spec.dim;
  std::mt19937_64 geo(DeriveSeed(spec.seed, 1));

  // Directions: one per topic and one per entity.
  std::vector<std::vector<double>> topic_dir, entity_dir;
  for (std::size_t t = 0; t < spec.topics; ++t) topic_dir.push_back(detail::RandomUnit(d, geo));
  for (std::size_t e = 0; e < spec.kb_size; ++e) entity_dir.push_back(detail::RandomUnit(d, geo));

  SyntheticData out;
  VectorTable words;
  words.dim = d;
  auto add_word = [&](std::string name, const std::vector<double>& v) {
    words.names.push_back(std::move(name));
    words.data.insert(words.data.end(), v.begin(), v.end());
    return WordId{static_cast<std::uint32_t>(words.names.size() - 1)};
  };
  out.entity_topic.resize(spec.kb_size);
  out.signatures.resize(spec.kb_size);
  for (std::size_t e = 0; e < spec.kb_size; ++e) {
    out.entity_topic[e] = e % spec.topics;
    for (std::size_t k = 0; k < spec.signature_words; ++k) {
      auto g = detail::RandomUnit(d, geo);
      auto v = detail::Mix({{0.5, &entity_dir[e]},
                            {1.2, &topic_dir[out.entity_topic[e]]},
                            {0.3, &g}});
      out.signatures[e].push_back(
          add_word(detail::Padded("sig", e) + "_" + std::to_string(k), v));
    }
  }
  std::vector<std::vector<WordId>> topic_vocab(spec.topics);
  for (std::size_t t = 0; t < spec.topics; ++t)
    for (std::size_t k = 0; k < spec.topic_words; ++k) {
      auto g = detail::RandomUnit(d, geo);
      auto v = detail::Mix({{1.0, &topic_dir[t]}, {0.4, &g}});
      topic_vocab[t].push_back(
          add_word(detail::Padded("topic", t, 2) + "_" + std::to_string(k), v));
    }
  std::vector<WordId> noise_vocab;
  for (std::size_t k = 0; k < spec.noise_vocab(); ++k)
    noise_vocab.push_back(add_word(detail::Padded("noise", k), detail::RandomUnit(d, geo)));
  out.store = EmbeddingStore::FromWordTable(words);
  for (std::size_t e = 0; e < spec.kb_size; ++e) out.store.AddEntity(detail::Padded("ent", e));

  std::vector<std::vector<std::size_t>> topic_members(spec.topics);
  for (std::size_t e = 0; e < spec.kb_size; ++e) topic_members[out.entity_topic[e]].push_back(e);

  // Surface forms: form f is headed by entity f and lists ambiguity-1
  // further entities with geometrically decaying counts.
  std::mt19937_64 forms_rng(DeriveSeed(spec.seed, 2));
  std::vector<std::vector<std::pair<std::size_t, double>>> forms_of(spec.kb_size);
  out.prior_counts.kind = PriorSourceKind::kCount;
  for (std::size_t f = 0; f < spec.kb_size; ++f) {
    std::vector<std::size_t> members = {f};
    while (members.size() < spec.ambiguity) {
      std::size_t e = UniformIndex(forms_rng, spec.kb_size);
      if (std::find(members.begin(), members.end(), e) == members.end()) members.push_back(e);
    }
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double count = std::round(1000.0 * std::pow(spec.prior_decay, static_cast<double>(k)));
      out.prior_counts.Add(detail::Padded("m", f), EntityId{static_cast<std::uint32_t>(members[k])}, count);
      forms_of[members[k]].push_back({f, count});
    }
  }
  out.prior = BuildPrior(std::span<const PriorSource>(&out.prior_counts, 1));

  auto draw_token = [&](std::mt19937_64& rng, std::size_t gold, double density) {
    if (Uniform01(rng) >= density)
      return noise_vocab.empty() ? topic_vocab[out.entity_topic[gold]][0]
                                 : noise_vocab[UniformIndex(rng, noise_vocab.size())];
    if (Uniform01(rng) < spec.signature_share)
      return out.signatures[gold][UniformIndex(rng, spec.signature_words)];
    const auto& tv = topic_vocab[out.entity_topic[gold]];
    return tv[UniformIndex(rng, tv.size())];
  };
  const double mean_density = 1.0 - spec.noise_rate;

  // Documents.
  std::mt19937_64 doc_rng(DeriveSeed(spec.seed, 3));
  const std::size_t half = spec.context_k / 2;
  std::vector<Document> docs;
  for (std::size_t n = 0; n < spec.num_docs; ++n) {
    Document doc;
    doc.id = detail::Padded("doc", n);
    const std::size_t topic = UniformIndex(doc_rng, spec.topics);
    const bool coherent = Uniform01(doc_rng) < spec.coherence;
    std::vector<std::size_t> pool = coherent ? topic_members[topic] : std::vector<std::size_t>{};
    if (!coherent)
      for (std::size_t e = 0; e < spec.kb_size; ++e) pool.push_back(e);
    Shuffle(pool, doc_rng);
    for (std::size_t i = 0; i < spec.mentions_per_doc; ++i) {
      const std::size_t gold = pool[i % pool.size()];
      // Surface form drawn in proportion to its count for the gold entity.
      std::vector<double> w;
      for (auto& [f, c] : forms_of[gold]) w.push_back(c);
      const std::size_t form = forms_of[gold][AliasTable(w).Sample(doc_rng)].first;
      const bool weak = Uniform01(doc_rng) < spec.weak_context_rate;
      // Per-mention signal density, uniform with mean 1 - noise_rate.
      const double density =
          weak ? 0.0 : std::min(1.0, 2.0 * mean_density * Uniform01(doc_rng));
      for (std::size_t k = 0; k < half; ++k)
        doc.tokens.push_back(out.store.words().Name(draw_token(doc_rng, gold, density)));
      Mention m;
      m.start = doc.tokens.size();
      m.surface = detail::Padded("m", form);
      doc.tokens.push_back(m.surface);
      m.end = doc.tokens.size();
      m.gold = EntityId{static_cast<std::uint32_t>(gold)};
      doc.mentions.push_back(std::move(m));
      for (std::size_t k = 0; k < spec.context_k - half; ++k)
        doc.tokens.push_back(out.store.words().Name(draw_token(doc_rng, gold, density)));
    }
    docs.push_back(std::move(doc));
  }
  const auto n_val = static_cast<std::size_t>(std::round(spec.validation_fraction * spec.num_docs));
  const auto n_test = static_cast<std::size_t>(std::round(spec.test_fraction * spec.num_docs));
  const std::size_t n_train = spec.num_docs - n_val - n_test;
  out.train.split = Split::kTrain;
  out.validation.split = Split::kValidation;
  out.test.split = Split::kTest;
  for (std::size_t n = 0; n < docs.size(); ++n) {
    auto& target = n < n_train ? out.train : n < n_train + n_val ? out.validation : out.test;
    target.docs.push_back(std::move(docs[n]));
  }

  // Co-occurrence counts: descriptions list the signature words and a few
  // topic words; hyperlink contexts are drawn like document contexts.
  std::mt19937_64 count_rng(DeriveSeed(spec.seed, 4));
  out.counts = CooccurrenceCounts();
  for (std::size_t e = 0; e < spec.kb_size; ++e) {
    const EntityId id{static_cast<std::uint32_t>(e)};
    for (WordId w : out.signatures[e]) out.counts.Add(id, w, 3.0, CountSource::kDescription);
    const auto& tv = topic_vocab[out.entity_topic[e]];
    for (std::size_t k = 0; k < 20; ++k)
      out.counts.Add(id, tv[UniformIndex(count_rng, tv.size())], 2.0, CountSource::kDescription);
    const double u = Uniform01(count_rng);
    const auto freq = static_cast<std::size_t>(
        std::floor(static_cast<double>(spec.max_link_frequency + 1) * u * u));
    out.frequency[id] = static_cast<double>(freq);
    for (std::size_t l = 0; l < freq; ++l)
      for (std::size_t k = 0; k < 2 * spec.link_window; ++k)
        out.counts.Add(id, draw_token(count_rng, e, mean_density), 1.0, CountSource::kHyperlink);
  }

  // Relatedness queries: same topic is related.
  std::mt19937_64 q_rng(DeriveSeed(spec.seed, 5));
  const auto n_pos = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(spec.query_positive_rate * spec.query_candidates)));
  for (std::size_t q = 0; q < spec.relatedness_queries; ++q) {
    const std::size_t target = UniformIndex(q_rng, spec.kb_size);
    std::vector<std::size_t> pos, neg;
    for (std::size_t e = 0; e < spec.kb_size; ++e) {
      if (e == target) continue;
      (out.entity_topic[e] == out.entity_topic[target] ? pos : neg).push_back(e);
    }
    Shuffle(pos, q_rng);
    Shuffle(neg, q_rng);
    pos.resize(std::min(pos.size(), n_pos));
    neg.resize(std::min(neg.size(), spec.query_candidates - pos.size()));
    RelatednessQuery query{EntityId{static_cast<std::uint32_t>(target)}, {}};
    for (auto e : pos) query.candidates.emplace_back(EntityId{static_cast<std::uint32_t>(e)}, 1);
    for (auto e : neg) query.candidates.emplace_back(EntityId{static_cast<std::uint32_t>(e)}, 0);
    Shuffle(query.candidates, q_rng);
    (q % 2 == 0 ? out.relatedness_validation : out.relatedness_test).push_back(std::move(query));
  }
  return out;
}

/// Writes every artifact of a synthetic benchmark into `dir`.
inline void SaveSynthetic(const std::string& dir, const SyntheticData& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  SaveVectorTable(path("words.txt"), data.store.WordTable(), VectorFormat::kText);
  SaveCounts(path("counts.tsv"), data.counts, data.store);
  {
    auto out = OpenForWrite(path("prior_counts.tsv"));
    for (const auto& [mention, ents] : data.prior_counts.entries)
      for (const auto& [e, c] : ents)
        out << mention << '\t' << data.store.entities().Name(e) << '\t' << FormatDouble(c) << '\n';
  }
  SaveCorpus(path("train.jsonl"), data.train.docs, data.store);
  SaveCorpus(path("validation.jsonl"), data.validation.docs, data.store);
  SaveCorpus(path("test.jsonl"), data.test.docs, data.store);
  SaveRelatednessQueries(path("relatedness_validation.tsv"), data.relatedness_validation, data.store);
  SaveRelatednessQueries(path("relatedness_test.tsv"), data.relatedness_test, data.store);
  {
    auto out = OpenForWrite(path("frequency.tsv"));
    for (const auto& [e, f] : data.frequency)
      out << data.store.entities().Name(e) << '\t' << FormatDouble(f) << '\n';
  }
  {
    auto out = OpenForWrite(path("signatures.tsv"));
    for (std::size_t e = 0; e < data.signatures.size(); ++e) {
      out << data.store.entities().Name(EntityId{static_cast<std::uint32_t>(e)}) << '\t'
          << data.entity_topic[e];
      for (WordId w : data.signatures[e]) out << '\t' << data.store.words().Name(w);
      out << '\n';
    }
  }
}

}  // namespace deepel
