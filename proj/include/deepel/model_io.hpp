// Versioned binary model files with a plain-text hyperparameter sidecar.
//
// Layout (little-endian): "DELM", u32 version, u32 kind (0 local,
// 1 global), u64 d, u64 hidden, then f64 arrays A, B, W1, b1, W2, b2, W3,
// b3 and for global models C, then u64 K, u64 R, f64 gamma and for global
// models f64 delta, u64 T.
#pragma once

#include <string>
#include <vector>

#include "deepel/core.hpp"
#include "deepel/global.hpp"
#include "deepel/local.hpp"

namespace deepel {

enum class ModelKind : std::uint32_t { kLocal = 0, kGlobal = 1 };

inline const char* ModelKindName(ModelKind k) {
  return k == ModelKind::kLocal ? "local" : "global";
}

inline ModelKind ParseModelKind(std::string_view s) {
  if (s == "local") return ModelKind::kLocal;
  if (s == "global") return ModelKind::kGlobal;
  throw Error("unknown model kind '" + std::string(s) + "'");
}

struct ModelFile {
  ModelKind kind = ModelKind::kLocal;
  GlobalParams params;  // C unused for local models
  std::size_t context_k = 100;
  std::size_t attention_r = 50;
  double gamma = 0.01;
  double delta = 0.5;
  std::size_t layers = 10;

  GlobalSettings settings() const { return {attention_r, layers, delta, gamma}; }
};

namespace detail {

inline constexpr char kModelMagic[4] = {'D', 'E', 'L', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void WriteArray(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) WriteLe(out, x);
}

inline void ReadArray(std::istream& in, std::vector<double>& v, std::size_t n,
                      const char* what) {
  v.resize(n);
  for (double& x : v) {
    x = ReadLe<double>(in, what);
    if (!std::isfinite(x)) throw Error(std::string("non-finite value in ") + what);
  }
}

}  // namespace detail

inline void WriteModel(std::ostream& out, const ModelFile& m) {
  const auto& p = m.params;
  const std::size_t d = p.local.a.size();
  const std::size_t h = p.local.f.hidden;
  out.write(detail::kModelMagic, 4);
  detail::WriteLe(out, detail::kModelVersion);
  detail::WriteLe(out, static_cast<std::uint32_t>(m.kind));
  detail::WriteLe(out, static_cast<std::uint64_t>(d));
  detail::WriteLe(out, static_cast<std::uint64_t>(h));
  for (const auto* v : {&p.local.a, &p.local.b, &p.local.f.w1, &p.local.f.b1,
                        &p.local.f.w2, &p.local.f.b2, &p.local.f.w3, &p.local.f.b3})
    detail::WriteArray(out, *v);
  if (m.kind == ModelKind::kGlobal) detail::WriteArray(out, p.c);
  detail::WriteLe(out, static_cast<std::uint64_t>(m.context_k));
  detail::WriteLe(out, static_cast<std::uint64_t>(m.attention_r));
  detail::WriteLe(out, m.gamma);
  if (m.kind == ModelKind::kGlobal) {
    detail::WriteLe(out, m.delta);
    detail::WriteLe(out, static_cast<std::uint64_t>(m.layers));
  }
}

inline ModelFile ReadModel(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, detail::kModelMagic))
    throw Error("not a model file (bad magic)");
  const auto version = detail::ReadLe<std::uint32_t>(in, "version");
  if (version != detail::kModelVersion)
    throw Error("unsupported model file version " + std::to_string(version));
  const auto kind = detail::ReadLe<std::uint32_t>(in, "kind");
  if (kind > 1) throw Error("unknown model kind " + std::to_string(kind));
  ModelFile m;
  m.kind = static_cast<ModelKind>(kind);
  const auto d = detail::ReadLe<std::uint64_t>(in, "dimension");
  const auto h = detail::ReadLe<std::uint64_t>(in, "hidden size");
  if (d == 0 || h == 0 || d > (1u << 20) || h > (1u << 16))
    throw Error("implausible model dimensions");
  auto& p = m.params;
  p.local.f.hidden = h;
  detail::ReadArray(in, p.local.a, d, "A");
  detail::ReadArray(in, p.local.b, d, "B");
  detail::ReadArray(in, p.local.f.w1, h * 2, "W1");
  detail::ReadArray(in, p.local.f.b1, h, "b1");
  detail::ReadArray(in, p.local.f.w2, h * h, "W2");
  detail::ReadArray(in, p.local.f.b2, h, "b2");
  detail::ReadArray(in, p.local.f.w3, h, "W3");
  detail::ReadArray(in, p.local.f.b3, 1, "b3");
  if (m.kind == ModelKind::kGlobal) {
    detail::ReadArray(in, p.c, d, "C");
  } else {
    p.c.assign(d, 1.0);
  }
  m.context_k = detail::ReadLe<std::uint64_t>(in, "K");
  m.attention_r = detail::ReadLe<std::uint64_t>(in, "R");
  m.gamma = detail::ReadLe<double>(in, "gamma");
  if (m.kind == ModelKind::kGlobal) {
    m.delta = detail::ReadLe<double>(in, "delta");
    m.layers = detail::ReadLe<std::uint64_t>(in, "T");
    if (!(m.delta > 0.0 && m.delta <= 1.0) || m.layers == 0)
      throw Error("model file has invalid damping or layer count");
  }
  if (m.context_k == 0 || m.attention_r == 0) throw Error("model file has K or R of zero");
  return m;
}

inline std::string ModelSidecar(const ModelFile& m) {
  std::ostringstream s;
  s << "kind = " << ModelKindName(m.kind) << "\n"
    << "dim = " << m.params.local.a.size() << "\n"
    << "hidden = " << m.params.local.f.hidden << "\n"
    << "parameters = "
    << 2 * m.params.local.a.size() + m.params.local.f.ParameterCount() +
           (m.kind == ModelKind::kGlobal ? m.params.c.size() : 0)
    << "\n"
    << "context_k = " << m.context_k << "\n"
    << "attention_r = " << m.attention_r << "\n"
    << "gamma = " << FormatDouble(m.gamma) << "\n";
  if (m.kind == ModelKind::kGlobal)
    s << "delta = " << FormatDouble(m.delta) << "\n"
      << "layers = " << m.layers << "\n";
  return s.str();
}

/// Writes `path` and the sidecar `path.txt`.
inline void SaveModel(const std::string& path, const ModelFile& m) {
  {
    auto out = OpenForWrite(path, std::ios::out | std::ios::binary);
    WriteModel(out, m);
    if (!out) throw IoError("failed writing '" + path + "'");
  }
  auto side = OpenForWrite(path + ".txt");
  side << ModelSidecar(m);
}

inline ModelFile LoadModel(const std::string& path) {
  auto in = OpenForRead(path, std::ios::in | std::ios::binary);
  return ReadModel(in);
}

}  // namespace deepel
