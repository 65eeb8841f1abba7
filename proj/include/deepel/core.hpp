// Identifiers, vocabularies, the shared word/entity embedding store, and
// vector file I/O.
#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace deepel {

enum class ErrorKind { kValidation, kIo };

/// Every failure in the library is reported through this exception. The kind
/// distinguishes malformed input (validation) from unreadable/unwritable
/// files (io); the CLI maps them to exit codes 1 and 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what,
                 ErrorKind kind = ErrorKind::kValidation)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error IoError(const std::string& what) {
  return Error(what, ErrorKind::kIo);
}

template <class Tag>
struct Id {
  std::uint32_t value = 0;
  auto operator<=>(const Id&) const = default;
};

using WordId = Id<struct WordTag>;
using EntityId = Id<struct EntityTag>;

}  // namespace deepel

template <class Tag>
struct std::hash<deepel::Id<Tag>> {
  std::size_t operator()(deepel::Id<Tag> id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};

namespace deepel {

// ---------------------------------------------------------------------------
// Small string helpers shared by the file readers.

inline std::vector<std::string_view> SplitOn(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view StripCr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline std::optional<double> ParseDouble(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> ParseInt(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest decimal representation that parses back to the same double.
inline std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ifstream OpenForRead(const std::string& path,
                                 std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream OpenForWrite(const std::string& path,
                                  std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

// ---------------------------------------------------------------------------

/// Bidirectional string <-> dense id map. Stop words are flagged rather than
/// removed so ids and token offsets never shift.
template <class IdT>
class Vocab {
 public:
  IdT Add(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it != index_.end()) return it->second;
    IdT id{static_cast<std::uint32_t>(names_.size())};
    names_.emplace_back(name);
    index_.emplace(names_.back(), id);
    stop_.push_back(false);
    freq_.push_back(0);
    return id;
  }

  std::optional<IdT> Find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& Name(IdT id) const {
    Check(id);
    return names_[id.value];
  }

  std::size_t size() const { return names_.size(); }
  bool Contains(IdT id) const { return id.value < names_.size(); }

  void Check(IdT id) const {
    if (!Contains(id)) {
      throw Error("id " + std::to_string(id.value) + " out of range [0, " +
                  std::to_string(names_.size()) + ")");
    }
  }

  void MarkStopWords(const std::unordered_set<std::string>& stop_words) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      stop_[i] = stop_words.contains(names_[i]);
  }
  bool IsStop(IdT id) const {
    Check(id);
    return stop_[id.value];
  }

  void AddFrequency(IdT id, std::uint64_t count) {
    Check(id);
    freq_[id.value] += count;
  }
  std::uint64_t Frequency(IdT id) const {
    Check(id);
    return freq_[id.value];
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, IdT> index_;
  std::vector<bool> stop_;
  std::vector<std::uint64_t> freq_;
};

// ---------------------------------------------------------------------------
// Vector arithmetic on spans.

inline double Dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

/// Cosine similarity. Undefined (and rejected) for zero vectors.
inline double Cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
  const double na = Norm(a), nb = Norm(b);
  if (na == 0.0 || nb == 0.0) throw Error("cosine: zero vector");
  return std::clamp(Dot(a, b) / (na * nb), -1.0, 1.0);
}

inline void NormalizeInPlace(std::span<double> a) {
  const double n = Norm(a);
  if (n == 0.0 || !std::isfinite(n)) throw Error("cannot normalize vector");
  for (double& x : a) x /= n;
}

// ---------------------------------------------------------------------------

/// Named rows of equal dimension as read from / written to a vector file.
struct VectorTable {
  std::size_t dim = 0;
  std::vector<std::string> names;
  std::vector<double> data;  // row-major, names.size() x dim

  std::span<const double> Row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

enum class VectorFormat { kText, kBinary };

inline VectorFormat ParseVectorFormat(std::string_view s) {
  if (s == "text" || s == "txt") return VectorFormat::kText;
  if (s == "binary" || s == "bin") return VectorFormat::kBinary;
  throw Error("unknown vector format '" + std::string(s) + "'");
}

/// Picks binary for *.bin paths and text otherwise.
inline VectorFormat GuessVectorFormat(std::string_view path) {
  return path.ends_with(".bin") ? VectorFormat::kBinary : VectorFormat::kText;
}

namespace detail {

inline constexpr char kVectorMagic[4] = {'D', 'E', 'L', 'V'};
inline constexpr std::uint32_t kVectorVersion = 1;

template <class T>
void WriteLe(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T ReadLe(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw Error("truncated binary file while reading " + what);
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

inline void AddRow(VectorTable& table,
                   std::unordered_set<std::string>& seen,
                   std::string_view name, std::size_t row) {
  if (!seen.emplace(name).second) {
    throw Error("duplicate token '" + std::string(name) + "' at row " +
                std::to_string(row));
  }
  table.names.emplace_back(name);
}

}  // namespace detail

inline VectorTable ReadTextVectors(std::istream& in) {
  VectorTable table;
  std::string line;
  std::size_t row = 0;
  bool have_header = false;
  std::size_t declared_count = 0;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++row;
    auto fields = SplitWhitespace(StripCr(line));
    if (fields.empty()) continue;
    if (!have_header) {
      auto count = fields.size() == 2 ? ParseInt(fields[0]) : std::nullopt;
      auto dim = fields.size() == 2 ? ParseInt(fields[1]) : std::nullopt;
      if (!count || !dim || *count < 0 || *dim <= 0)
        throw Error("row 1: expected header '<count> <dim>'");
      declared_count = static_cast<std::size_t>(*count);
      table.dim = static_cast<std::size_t>(*dim);
      have_header = true;
      continue;
    }
    if (fields.size() != table.dim + 1) {
      throw Error("row " + std::to_string(row) + ": expected " +
                  std::to_string(table.dim) + " values, found " +
                  std::to_string(fields.size() - 1));
    }
    detail::AddRow(table, seen, fields[0], row);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      auto v = ParseDouble(fields[k]);
      if (!v || !std::isfinite(*v))
        throw Error("row " + std::to_string(row) + ": non-finite value '" +
                    std::string(fields[k]) + "'");
      table.data.push_back(*v);
    }
  }
  if (table.names.empty()) throw Error("no vectors");
  if (table.names.size() != declared_count) {
    throw Error("header declares " + std::to_string(declared_count) +
                " vectors but file holds " +
                std::to_string(table.names.size()));
  }
  return table;
}

inline VectorTable ReadBinaryVectors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw Error("no vectors");
  if (std::memcmp(magic, detail::kVectorMagic, 4) != 0)
    throw Error("bad magic in binary vector file");
  const auto version = detail::ReadLe<std::uint32_t>(in, "version");
  if (version != detail::kVectorVersion)
    throw Error("unsupported binary vector version " +
                std::to_string(version));
  const auto count = detail::ReadLe<std::uint64_t>(in, "count");
  const auto dim = detail::ReadLe<std::uint64_t>(in, "dim");
  if (count == 0) throw Error("no vectors");
  if (dim == 0) throw Error("binary vector file declares dim 0");
  VectorTable table;
  table.dim = dim;
  table.data.reserve(count * dim);
  std::unordered_set<std::string> seen;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = detail::ReadLe<std::uint32_t>(in, "token length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw Error("truncated token name");
    detail::AddRow(table, seen, name, r + 1);
    for (std::uint64_t k = 0; k < dim; ++k) {
      const float v = detail::ReadLe<float>(in, "vector payload");
      if (!std::isfinite(v))
        throw Error("row " + std::to_string(r + 1) + ": non-finite value");
      table.data.push_back(static_cast<double>(v));
    }
  }
  return table;
}

inline VectorTable LoadVectorTable(const std::string& path,
                                   VectorFormat format) {
  if (format == VectorFormat::kText) {
    auto in = OpenForRead(path);
    return ReadTextVectors(in);
  }
  auto in = OpenForRead(path, std::ios::in | std::ios::binary);
  return ReadBinaryVectors(in);
}

inline void WriteTextVectors(std::ostream& out, const VectorTable& table) {
  out << table.names.size() << ' ' << table.dim << '\n';
  for (std::size_t i = 0; i < table.names.size(); ++i) {
    out << table.names[i];
    for (double v : table.Row(i)) out << ' ' << FormatDouble(v);
    out << '\n';
  }
}

inline void WriteBinaryVectors(std::ostream& out, const VectorTable& table) {
  out.write(detail::kVectorMagic, 4);
  detail::WriteLe<std::uint32_t>(out, detail::kVectorVersion);
  detail::WriteLe<std::uint64_t>(out, table.names.size());
  detail::WriteLe<std::uint64_t>(out, table.dim);
  for (std::size_t i = 0; i < table.names.size(); ++i) {
    detail::WriteLe<std::uint32_t>(
        out, static_cast<std::uint32_t>(table.names[i].size()));
    out.write(table.names[i].data(),
              static_cast<std::streamsize>(table.names[i].size()));
    for (double v : table.Row(i))
      detail::WriteLe<float>(out, static_cast<float>(v));
  }
}

inline void SaveVectorTable(const std::string& path, const VectorTable& table,
                            VectorFormat format) {
  if (format == VectorFormat::kText) {
    auto out = OpenForWrite(path);
    WriteTextVectors(out, table);
    if (!out) throw IoError("failed writing '" + path + "'");
  } else {
    auto out = OpenForWrite(path, std::ios::out | std::ios::binary);
    WriteBinaryVectors(out, table);
    if (!out) throw IoError("failed writing '" + path + "'");
  }
}

// ---------------------------------------------------------------------------

/// Word and entity vectors in one d-dimensional space. The word table is
/// frozen once constructed. Entity rows exist for every entity in the
/// vocabulary but only hold a vector once one has been assigned; assigned
/// entity vectors are always unit norm.
///
/// Concurrent readers are safe. Concurrent SetEntity calls on distinct rows
/// are safe; the entity vocabulary must not grow while that happens.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error("embedding dimension must be positive");
  }

  static EmbeddingStore FromWordTable(const VectorTable& table) {
    EmbeddingStore store(table.dim);
    for (std::size_t i = 0; i < table.names.size(); ++i)
      store.words_.Add(table.names[i]);
    store.word_data_ = table.data;
    for (double v : store.word_data_)
      if (!std::isfinite(v)) throw Error("non-finite word vector value");
    return store;
  }

  std::size_t dim() const { return dim_; }

  const Vocab<WordId>& words() const { return words_; }
  Vocab<WordId>& mutable_words() { return words_; }  // flags/frequencies only
  const Vocab<EntityId>& entities() const { return entities_; }

  std::span<const double> Word(WordId id) const {
    words_.Check(id);
    return {word_data_.data() + id.value * dim_, dim_};
  }

  EntityId AddEntity(std::string_view name) {
    EntityId id = entities_.Add(name);
    if (entity_data_.size() < entities_.size() * dim_) {
      entity_data_.resize(entities_.size() * dim_, 0.0);
      has_entity_.resize(entities_.size(), 0);
    }
    return id;
  }

  bool HasEntityVector(EntityId id) const {
    return entities_.Contains(id) && has_entity_[id.value] != 0;
  }

  std::span<const double> Entity(EntityId id) const {
    entities_.Check(id);
    if (!has_entity_[id.value])
      throw Error("entity '" + entities_.Name(id) + "' has no vector");
    return {entity_data_.data() + id.value * dim_, dim_};
  }

  /// Stores the projection of `v` onto the unit sphere.
  void SetEntity(EntityId id, std::span<const double> v) {
    entities_.Check(id);
    if (v.size() != dim_) throw Error("entity vector dimension mismatch");
    std::span<double> row{entity_data_.data() + id.value * dim_, dim_};
    std::copy(v.begin(), v.end(), row.begin());
    NormalizeInPlace(row);
    has_entity_[id.value] = 1;
  }

  void LoadEntities(const VectorTable& table) {
    if (table.dim != dim_)
      throw Error("entity vectors have dim " + std::to_string(table.dim) +
                  " but word vectors have dim " + std::to_string(dim_));
    for (std::size_t i = 0; i < table.names.size(); ++i)
      SetEntity(AddEntity(table.names[i]), table.Row(i));
  }

  VectorTable EntityTable() const {
    VectorTable t;
    t.dim = dim_;
    for (std::uint32_t i = 0; i < entities_.size(); ++i) {
      if (!has_entity_[i]) continue;
      t.names.push_back(entities_.Name(EntityId{i}));
      auto row = Entity(EntityId{i});
      t.data.insert(t.data.end(), row.begin(), row.end());
    }
    return t;
  }

  VectorTable WordTable() const {
    VectorTable t;
    t.dim = dim_;
    for (std::uint32_t i = 0; i < words_.size(); ++i)
      t.names.push_back(words_.Name(WordId{i}));
    t.data = word_data_;
    return t;
  }

 private:
  std::size_t dim_ = 0;
  Vocab<WordId> words_;
  Vocab<EntityId> entities_;
  std::vector<double> word_data_;
  std::vector<double> entity_data_;
  std::vector<char> has_entity_;
};

inline EmbeddingStore LoadWordVectors(const std::string& path,
                                      VectorFormat format) {
  return EmbeddingStore::FromWordTable(LoadVectorTable(path, format));
}

struct Neighbor {
  WordId word;
  double similarity;
};

/// Top-k words by cosine to an entity, restricted to words whose frequency
/// is at least `min_freq`. Descending similarity, ties by WordId.
inline std::vector<Neighbor> NearestWords(const EmbeddingStore& store,
                                          EntityId entity, std::size_t k,
                                          std::uint64_t min_freq) {
  auto target = store.Entity(entity);
  std::vector<Neighbor> all;
  if (k == 0) return all;
  for (std::uint32_t i = 0; i < store.words().size(); ++i) {
    WordId w{i};
    if (store.words().Frequency(w) < min_freq) continue;
    auto v = store.Word(w);
    if (Norm(v) == 0.0) continue;
    all.push_back({w, Cosine(target, v)});
  }
  auto cmp = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.word < b.word;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + keep, all.end(), cmp);
  all.resize(keep);
  return all;
}

/// Default English stop-word list used when none is supplied.
inline const std::unordered_set<std::string>& DefaultStopWords() {
  static const std::unordered_set<std::string> kWords = {
      "a",       "about",   "above",  "after",   "again",   "against",
      "all",     "am",      "an",     "and",     "any",     "are",
      "as",      "at",      "be",     "because", "been",    "before",
      "being",   "below",   "between", "both",   "but",     "by",
      "can",     "could",   "did",    "do",      "does",    "doing",
      "down",    "during",  "each",   "few",     "for",     "from",
      "further", "had",     "has",    "have",    "having",  "he",
      "her",     "here",    "hers",   "herself", "him",     "himself",
      "his",     "how",     "i",      "if",      "in",      "into",
      "is",      "it",      "its",    "itself",  "just",    "me",
      "more",    "most",    "my",     "myself",  "no",      "nor",
      "not",     "now",     "of",     "off",     "on",      "once",
      "only",    "or",      "other",  "ought",   "our",     "ours",
      "ourselves", "out",   "over",   "own",     "same",    "she",
      "should",  "so",      "some",   "such",    "than",    "that",
      "the",     "their",   "theirs", "them",    "themselves", "then",
      "there",   "these",   "they",   "this",    "those",   "through",
      "to",      "too",     "under",  "until",   "up",      "very",
      "was",     "we",      "were",   "what",    "when",    "where",
      "which",   "while",   "who",    "whom",    "why",     "will",
      "with",    "would",   "you",    "your",    "yours",   "yourself",
      "yourselves", "also", "may",    "might",   "must",    "shall",
      "said",    "says",    "one",    "two",     "upon",    "within",
      "without", "yet",     "via",    "per",     "among",   "onto",
      "s",       "t",       "don",    "ll",      "re",      "ve",
      "de",      "la",      "le",     "el",      "der",     "die",
      "und",     "et",      "mr",     "mrs",     "ms",      "etc"};
  return kWords;
}

/// One word per line; blank lines and '#' comments are ignored.
inline std::unordered_set<std::string> LoadStopWords(const std::string& path) {
  auto in = OpenForRead(path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto s = StripCr(line);
    auto fields = SplitWhitespace(s);
    if (fields.empty() || fields[0].starts_with('#')) continue;
    out.emplace(fields[0]);
  }
  return out;
}

}  // namespace deepel
