// Define-by-run reverse-mode differentiation over small dense matrices.
//
// A Tape records every operation as it is evaluated; Backward() replays the
// records in reverse, accumulating adjoints. Tapes are rebuilt per example
// because document topology (mention count, candidate counts) varies.
//
// Non-smooth operations (max, relu, top-R masking) record a hash of their
// discrete choices so that gradient checking can detect when a perturbation
// crossed a kink.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepel/core.hpp"

namespace deepel {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while its
/// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::span<const double> value() const;
  double operator[](std::size_t i) const { return value()[i]; }
  double scalar() const;
  std::span<const double> grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf that never receives gradient.
  Var Constant(std::size_t rows, std::size_t cols,
               std::span<const double> values) {
    Check(values.size() == rows * cols, "constant: shape mismatch");
    return Push(rows, cols, {values.begin(), values.end()}, false);
  }
  Var Constant(std::span<const double> column) {
    return Constant(column.size(), 1, column);
  }
  Var Scalar(double v) { return Push(1, 1, {v}, false); }

  /// A trainable leaf bound to external storage. The storage address is the
  /// key used by GradOf(); binding the same storage twice returns the first
  /// leaf.
  Var Parameter(std::span<const double> storage, std::size_t rows,
                std::size_t cols) {
    Check(storage.size() == rows * cols, "parameter: shape mismatch");
    for (auto& [ptr, id] : params_)
      if (ptr == storage.data()) return Var(this, id);
    Var v = Push(rows, cols, {storage.begin(), storage.end()}, true);
    params_.emplace_back(storage.data(), v.id());
    return v;
  }
  Var Parameter(std::span<const double> column) {
    return Parameter(column, column.size(), 1);
  }

  /// Runs the reverse sweep from a scalar output seeded with adjoint 1.
  void Backward(Var output) {
    Check(output.size() == 1, "backward: output must be a scalar");
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    nodes_[output.id()].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward) continue;
      for (double g : n.grad)
        if (std::isnan(g)) throw Error("NaN adjoint during backward pass");
      n.backward();
    }
  }

  /// Gradient for parameter storage bound via Parameter(); empty if that
  /// storage never took part in this tape.
  std::span<const double> GradOf(const double* storage) const {
    for (auto& [ptr, id] : params_)
      if (ptr == storage) return nodes_[id].grad;
    return {};
  }

  /// Discrete choices made by non-smooth operations, in recording order.
  const std::vector<std::uint64_t>& decisions() const { return decisions_; }
  void RecordDecision(std::uint64_t h) { decisions_.push_back(h); }

  std::size_t size() const { return nodes_.size(); }

  // -- internals used by the operation functions below ----------------------
  struct Node {
    std::size_t rows = 0, cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var Push(std::size_t rows, std::size_t cols, std::vector<double> value,
           bool needs_grad) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.grad.assign(value.size(), 0.0);
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Node& node(std::uint32_t id) { return nodes_[id]; }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  bool NeedsGrad(Var v) const { return nodes_[v.id()].needs_grad; }

  static void Check(bool ok, const char* what) {
    if (!ok) throw Error(what);
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<const double*, std::uint32_t>> params_;
  std::vector<std::uint64_t> decisions_;
};

inline std::size_t Var::rows() const { return tape_->node(id_).rows; }
inline std::size_t Var::cols() const { return tape_->node(id_).cols; }
inline std::span<const double> Var::value() const {
  return tape_->node(id_).value;
}
inline double Var::scalar() const {
  Tape::Check(size() == 1, "scalar(): value is not 1x1");
  return value()[0];
}
inline std::span<const double> Var::grad() const {
  return tape_->node(id_).grad;
}

namespace detail {

inline std::uint64_t HashMix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

// Creates an output node whose backward closure runs only when some input
// needs gradient. `bw` receives the output adjoint.
template <class Backward>
Var Emit(std::initializer_list<Var> inputs, std::size_t rows, std::size_t cols,
         std::vector<double> value, Backward&& bw) {
  Tape& tape = inputs.begin()->tape();
  bool needs = false;
  for (const Var& v : inputs) needs = needs || tape.NeedsGrad(v);
  Var out = tape.Push(rows, cols, std::move(value), needs);
  if (needs) {
    const std::uint32_t id = out.id();
    Tape* t = &tape;
    tape.node(id).backward = [t, id, bw = std::forward<Backward>(bw)]() {
      bw(std::span<const double>(t->node(id).grad));
    };
  }
  return out;
}

inline std::vector<double>& GradRef(Var v) { return v.tape().node(v.id()).grad; }
inline bool Wants(Var v) { return v.tape().NeedsGrad(v); }

inline void SameShape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic.

inline Var Add(Var a, Var b) {
  detail::SameShape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return detail::Emit({a, b}, a.rows(), a.cols(), std::move(v),
                      [a, b](std::span<const double> g) {
                        if (detail::Wants(a)) {
                          auto& ga = detail::GradRef(a);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        }
                        if (detail::Wants(b)) {
                          auto& gb = detail::GradRef(b);
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                        }
                      });
}

inline Var Sub(Var a, Var b) {
  detail::SameShape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return detail::Emit({a, b}, a.rows(), a.cols(), std::move(v),
                      [a, b](std::span<const double> g) {
                        if (detail::Wants(a)) {
                          auto& ga = detail::GradRef(a);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        }
                        if (detail::Wants(b)) {
                          auto& gb = detail::GradRef(b);
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                        }
                      });
}

/// Elementwise (Hadamard) product.
inline Var Mul(Var a, Var b) {
  detail::SameShape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return detail::Emit({a, b}, a.rows(), a.cols(), std::move(v),
                      [a, b](std::span<const double> g) {
                        if (detail::Wants(a)) {
                          auto& ga = detail::GradRef(a);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] * b[i];
                        }
                        if (detail::Wants(b)) {
                          auto& gb = detail::GradRef(b);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            gb[i] += g[i] * a[i];
                        }
                      });
}

/// diag(d) * x for column vectors d and x.
inline Var ScaleByDiagonal(Var diag, Var x) {
  Tape::Check(diag.cols() == 1 && x.cols() == 1,
              "scale_by_diagonal: expects column vectors");
  return Mul(diag, x);
}

inline Var Neg(Var a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -a[i];
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
                      });
}

inline Var Scale(Var a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * a[i];
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a, c](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          ga[i] += c * g[i];
                      });
}

inline Var AddScalar(Var a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + c;
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      });
}

/// max(0, x); the gradient at exactly 0 is 0.
inline Var Relu(Var a) {
  std::vector<double> v(a.size());
  std::uint64_t h = 0x52454c55;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = a[i] > 0.0 ? a[i] : 0.0;
    h = detail::HashMix(h, a[i] > 0.0);
  }
  a.tape().RecordDecision(h);
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          if (a[i] > 0.0) ga[i] += g[i];
                      });
}

inline Var Exp(Var a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a[i]);
  Tape* t = &a.tape();
  const auto out_id = static_cast<std::uint32_t>(t->size());
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a, t, out_id](std::span<const double> g) {
                        auto y = t->node(out_id).value;
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          if (g[i] != 0.0) ga[i] += g[i] * y[i];
                      });
}

inline Var Log(Var a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(a[i] >= 0.0)) throw Error("log of negative value");
    v[i] = std::log(a[i]);
  }
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          if (g[i] != 0.0) ga[i] += g[i] / a[i];
                      });
}

// ---------------------------------------------------------------------------
// Reductions.

inline Var Sum(Var a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return detail::Emit({a}, 1, 1, {s}, [a](std::span<const double> g) {
    auto& ga = detail::GradRef(a);
    for (double& x : ga) x += g[0];
  });
}

inline Var Dot(Var a, Var b) {
  detail::SameShape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return detail::Emit({a, b}, 1, 1, {s}, [a, b](std::span<const double> g) {
    if (detail::Wants(a)) {
      auto& ga = detail::GradRef(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * b[i];
    }
    if (detail::Wants(b)) {
      auto& gb = detail::GradRef(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * a[i];
    }
  });
}

namespace detail {
inline std::size_t ArgMax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}
}  // namespace detail

/// Maximum over a subset of entries (all entries when `indices` is empty).
/// The full adjoint flows to the argmax; ties go to the smallest index.
inline Var MaxOver(Var a, std::span<const std::size_t> indices = {}) {
  Tape::Check(a.size() > 0, "max_over: empty input");
  std::size_t best = indices.empty() ? 0 : indices[0];
  auto consider = [&](std::size_t i) {
    Tape::Check(i < a.size(), "max_over: index out of range");
    if (a[i] > a[best] || (a[i] == a[best] && i < best)) best = i;
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < a.size(); ++i) consider(i);
  } else {
    for (std::size_t i : indices) consider(i);
  }
  Tape::Check(a[best] != kNegInf, "max_over: all entries are -inf");
  a.tape().RecordDecision(detail::HashMix(0x4d4158, best));
  return detail::Emit({a}, 1, 1, {a[best]}, [a, best](std::span<const double> g) {
    detail::GradRef(a)[best] += g[0];
  });
}

/// Per-row maximum of a matrix, as a column vector.
inline Var RowMax(Var m) {
  const std::size_t r = m.rows(), c = m.cols();
  Tape::Check(c > 0, "row_max: no columns");
  std::vector<double> v(r);
  std::vector<std::size_t> arg(r);
  std::uint64_t h = 0x524d4158;
  auto vals = m.value();
  for (std::size_t i = 0; i < r; ++i) {
    arg[i] = detail::ArgMax(vals.subspan(i * c, c));
    v[i] = vals[i * c + arg[i]];
    h = detail::HashMix(h, arg[i]);
  }
  m.tape().RecordDecision(h);
  return detail::Emit({m}, r, 1, std::move(v),
                      [m, c, arg = std::move(arg)](std::span<const double> g) {
                        auto& gm = detail::GradRef(m);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          gm[i * c + arg[i]] += g[i];
                      });
}

/// Max-plus product: out(r) = max_c P(r, c) + h(c). Ties go to the smallest c.
inline Var MaxPlus(Var p, Var h) {
  const std::size_t rows = p.rows(), cols = p.cols();
  Tape::Check(h.size() == cols && cols > 0, "max_plus: shape mismatch");
  std::vector<double> v(rows);
  std::vector<std::size_t> arg(rows);
  std::uint64_t hash = 0x4d50;
  auto pv = p.value();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    double best_v = pv[r * cols] + h[0];
    for (std::size_t c = 1; c < cols; ++c) {
      const double x = pv[r * cols + c] + h[c];
      if (x > best_v) {
        best_v = x;
        best = c;
      }
    }
    arg[r] = best;
    v[r] = best_v;
    hash = detail::HashMix(hash, best);
  }
  p.tape().RecordDecision(hash);
  return detail::Emit(
      {p, h}, rows, 1, std::move(v),
      [p, h, cols, arg = std::move(arg)](std::span<const double> g) {
        const bool wp = detail::Wants(p), wh = detail::Wants(h);
        for (std::size_t r = 0; r < g.size(); ++r) {
          if (wp) detail::GradRef(p)[r * cols + arg[r]] += g[r];
          if (wh) detail::GradRef(h)[arg[r]] += g[r];
        }
      });
}

/// Softmax over all entries, stabilised by max subtraction. Entries equal to
/// -inf receive probability 0 and no gradient.
inline Var Softmax(Var a) {
  Tape::Check(a.size() > 0, "softmax: empty input");
  double mx = kNegInf;
  for (double x : a.value()) mx = std::max(mx, x);
  if (mx == kNegInf) throw Error("empty reduced context");
  std::vector<double> v(a.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = a[i] == kNegInf ? 0.0 : std::exp(a[i] - mx);
    z += v[i];
  }
  for (double& x : v) x /= z;
  Tape* t = &a.tape();
  const auto out_id = static_cast<std::uint32_t>(t->size());
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a, t, out_id](std::span<const double> g) {
                        auto y = t->node(out_id).value;
                        double dot = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i)
                          dot += g[i] * y[i];
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          ga[i] += y[i] * (g[i] - dot);
                      });
}

inline Var LogSumExp(Var a) {
  Tape::Check(a.size() > 0, "logsumexp: empty input");
  double mx = kNegInf;
  for (double x : a.value()) mx = std::max(mx, x);
  if (mx == kNegInf) throw Error("logsumexp: all entries are -inf");
  double z = 0.0;
  for (double x : a.value()) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  return detail::Emit({a}, 1, 1, {lse}, [a, lse](std::span<const double> g) {
    auto& ga = detail::GradRef(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += g[0] * std::exp(a[i] - lse);
  });
}

/// x - logsumexp(x): the log of Softmax(x), computed without taking log(0).
inline Var LogSoftmax(Var a) {
  Tape::Check(a.size() > 0, "log_softmax: empty input");
  double mx = kNegInf;
  for (double x : a.value()) mx = std::max(mx, x);
  if (mx == kNegInf) throw Error("log_softmax: all entries are -inf");
  double z = 0.0;
  for (double x : a.value()) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - lse;
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a, lse](std::span<const double> g) {
                        double total = 0.0;
                        for (double x : g) total += x;
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          ga[i] += g[i] - std::exp(a[i] - lse) * total;
                      });
}

/// Replaces entries where mask is true by `fill`; masked entries pass no
/// gradient.
inline Var MaskedFill(Var a, const std::vector<bool>& mask, double fill) {
  Tape::Check(mask.size() == a.size(), "masked_fill: mask size mismatch");
  std::vector<double> v(a.value().begin(), a.value().end());
  std::uint64_t h = 0x4d41534b;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) v[i] = fill;
    h = detail::HashMix(h, mask[i]);
  }
  a.tape().RecordDecision(h);
  return detail::Emit({a}, a.rows(), a.cols(), std::move(v),
                      [a, mask](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i)
                          if (!mask[i]) ga[i] += g[i];
                      });
}

// ---------------------------------------------------------------------------
// Shape and linear-algebra operations.

/// Dense matrix product.
inline Var MatMul(Var a, Var b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tape::Check(b.rows() == k, "matmul: inner dimension mismatch");
  std::vector<double> v(n * m, 0.0);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) v[i * m + j] += x * bv[p * m + j];
    }
  return detail::Emit({a, b}, n, m, std::move(v),
                      [a, b, n, k, m](std::span<const double> g) {
                        auto av = a.value(), bv = b.value();
                        if (detail::Wants(a)) {
                          auto& ga = detail::GradRef(a);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t p = 0; p < k; ++p) {
                              double s = 0.0;
                              for (std::size_t j = 0; j < m; ++j)
                                s += g[i * m + j] * bv[p * m + j];
                              ga[i * k + p] += s;
                            }
                        }
                        if (detail::Wants(b)) {
                          auto& gb = detail::GradRef(b);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t p = 0; p < k; ++p) {
                              const double x = av[i * k + p];
                              if (x == 0.0) continue;
                              for (std::size_t j = 0; j < m; ++j)
                                gb[p * m + j] += x * g[i * m + j];
                            }
                        }
                      });
}

/// m (r x c) plus column vector b (r x 1) added to every column.
inline Var AddColumn(Var m, Var b) {
  const std::size_t r = m.rows(), c = m.cols();
  Tape::Check(b.rows() == r && b.cols() == 1, "add_column: shape mismatch");
  std::vector<double> v(m.value().begin(), m.value().end());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] += b[i];
  return detail::Emit({m, b}, r, c, std::move(v),
                      [m, b, r, c](std::span<const double> g) {
                        if (detail::Wants(m)) {
                          auto& gm = detail::GradRef(m);
                          for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
                        }
                        if (detail::Wants(b)) {
                          auto& gb = detail::GradRef(b);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < c; ++j)
                              gb[i] += g[i * c + j];
                        }
                      });
}

inline Var Transpose(Var a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = a[i * c + j];
  return detail::Emit({a}, c, r, std::move(v),
                      [a, r, c](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j)
                            ga[i * c + j] += g[j * r + i];
                      });
}

/// Same data, new shape.
inline Var Reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape::Check(rows * cols == a.size(), "reshape: size mismatch");
  std::vector<double> v(a.value().begin(), a.value().end());
  return detail::Emit({a}, rows, cols, std::move(v),
                      [a](std::span<const double> g) {
                        auto& ga = detail::GradRef(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      });
}

/// Stacks the entries of `parts` (each read in storage order) as the rows
/// of a parts.size() x n matrix.
inline Var StackRows(std::span<const Var> parts) {
  Tape::Check(!parts.empty(), "stack_rows: nothing to stack");
  const std::size_t n = parts[0].size();
  std::vector<double> v;
  v.reserve(parts.size() * n);
  for (const Var& p : parts) {
    Tape::Check(p.size() == n, "stack_rows: length mismatch");
    v.insert(v.end(), p.value().begin(), p.value().end());
  }
  Tape& tape = parts[0].tape();
  bool needs = false;
  for (const Var& p : parts) needs = needs || tape.NeedsGrad(p);
  Var out = tape.Push(parts.size(), n, std::move(v), needs);
  if (needs) {
    std::vector<Var> ps(parts.begin(), parts.end());
    Tape* t = &tape;
    const auto id = out.id();
    tape.node(id).backward = [t, id, ps = std::move(ps), n]() {
      auto g = std::span<const double>(t->node(id).grad);
      for (std::size_t r = 0; r < ps.size(); ++r) {
        if (!detail::Wants(ps[r])) continue;
        auto& gp = detail::GradRef(ps[r]);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[r * n + i];
      }
    };
  }
  return out;
}

/// Concatenates values (in storage order) into one column vector.
inline Var Concat(std::span<const Var> parts) {
  Tape::Check(!parts.empty(), "concat: nothing to concatenate");
  std::vector<double> v;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(v.size());
    v.insert(v.end(), p.value().begin(), p.value().end());
  }
  Tape& tape = parts[0].tape();
  bool needs = false;
  for (const Var& p : parts) needs = needs || tape.NeedsGrad(p);
  const std::size_t total = v.size();
  Var out = tape.Push(total, 1, std::move(v), needs);
  if (needs) {
    std::vector<Var> ps(parts.begin(), parts.end());
    Tape* t = &tape;
    const auto id = out.id();
    tape.node(id).backward = [t, id, ps = std::move(ps),
                              offsets = std::move(offsets)]() {
      auto g = std::span<const double>(t->node(id).grad);
      for (std::size_t r = 0; r < ps.size(); ++r) {
        if (!detail::Wants(ps[r])) continue;
        auto& gp = detail::GradRef(ps[r]);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[r] + i];
      }
    };
  }
  return out;
}

/// Single entry as a 1x1 value.
inline Var Element(Var a, std::size_t i) {
  Tape::Check(i < a.size(), "element: index out of range");
  return detail::Emit({a}, 1, 1, {a[i]}, [a, i](std::span<const double> g) {
    detail::GradRef(a)[i] += g[0];
  });
}

/// Sum of a list of same-shaped values.
inline Var AddN(std::span<const Var> parts) {
  Tape::Check(!parts.empty(), "add_n: nothing to add");
  const std::size_t r = parts[0].rows(), c = parts[0].cols();
  std::vector<double> v(r * c, 0.0);
  for (const Var& p : parts) {
    Tape::Check(p.rows() == r && p.cols() == c, "add_n: shape mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += p[i];
  }
  Tape& tape = parts[0].tape();
  bool needs = false;
  for (const Var& p : parts) needs = needs || tape.NeedsGrad(p);
  Var out = tape.Push(r, c, std::move(v), needs);
  if (needs) {
    std::vector<Var> ps(parts.begin(), parts.end());
    Tape* t = &tape;
    const auto id = out.id();
    tape.node(id).backward = [t, id, ps = std::move(ps)]() {
      auto g = std::span<const double>(t->node(id).grad);
      for (const Var& p : ps) {
        if (!detail::Wants(p)) continue;
        auto& gp = detail::GradRef(p);
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      }
    };
  }
  return out;
}

/// Matrix M with M(r, c) = scale * sum_k x_r[k] * diag[k] * y_c[k] for
/// constant row sets X (rows x d) and Y (cols x d) and a trainable diagonal.
/// This is the batched form of the diagonal bilinear score x^T D y.
inline Var DiagBilinear(std::span<const double> x, std::size_t x_rows,
                        std::span<const double> y, std::size_t y_rows,
                        Var diag, double scale = 1.0) {
  const std::size_t d = diag.size();
  Tape::Check(x.size() == x_rows * d && y.size() == y_rows * d,
              "diag_bilinear: shape mismatch");
  std::vector<double> v(x_rows * y_rows, 0.0);
  auto dv = diag.value();
  std::vector<double> scaled(d);
  for (std::size_t r = 0; r < x_rows; ++r) {
    for (std::size_t k = 0; k < d; ++k) scaled[k] = x[r * d + k] * dv[k];
    for (std::size_t c = 0; c < y_rows; ++c) {
      double s = 0.0;
      const double* yc = y.data() + c * d;
      for (std::size_t k = 0; k < d; ++k) s += scaled[k] * yc[k];
      v[r * y_rows + c] = scale * s;
    }
  }
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  return detail::Emit(
      {diag}, x_rows, y_rows, std::move(v),
      [diag, d, x_rows, y_rows, scale, xs = std::move(xs),
       ys = std::move(ys)](std::span<const double> g) {
        auto& gd = detail::GradRef(diag);
        // dM(r,c)/d diag[k] = scale * x_r[k] * y_c[k]
        std::vector<double> ysum(d);
        for (std::size_t r = 0; r < x_rows; ++r) {
          std::fill(ysum.begin(), ysum.end(), 0.0);
          for (std::size_t c = 0; c < y_rows; ++c) {
            const double gv = g[r * y_rows + c];
            if (gv == 0.0) continue;
            const double* yc = ys.data() + c * d;
            for (std::size_t k = 0; k < d; ++k) ysum[k] += gv * yc[k];
          }
          for (std::size_t k = 0; k < d; ++k)
            gd[k] += scale * xs[r * d + k] * ysum[k];
        }
      });
}

/// Hinge [margin - good + bad]_+ for scalar values.
inline Var Hinge(double margin, Var good, Var bad) {
  return Relu(AddScalar(Sub(bad, good), margin));
}

}  // namespace deepel
